#include "cascade/prompting.hpp"

#include <algorithm>
#include <mutex>
#include <numeric>
#include <set>

#include <json.hpp>

#include "cascade/error.hpp"
#include "cascade/kernels.hpp"
#include "cascade/random.hpp"
#include "cascade/text.hpp"

namespace cascade {

// --- retrieval ---------------------------------------------------------------

void RetrievalConfig::validate() const {
    if (k < 0) throw InvalidArgument("retrieval k must be >= 0");
    if (!(t >= -1.0 && t <= 1.0)) throw InvalidArgument("retrieval threshold t must be in [-1, 1]");
}

RetrievedExamples retrieve_icl(const EmbeddingVector& query, const VectorStore& store, const RetrievalConfig& cfg) {
    cfg.validate();
    RetrievedExamples out;
    for (const auto& intent : store.intents()) out[intent];
    if (cfg.k == 0 || store.empty()) return out;
    if (query.dim() != store.dim()) throw DimensionMismatch("retrieve_icl: query dim differs from store dim");

    std::vector<double> sims(store.rows());
    kernels::dot_rows(query.values(), store.matrix(), sims);

    for (const auto& intent : store.intents()) {
        const auto r = store.range(intent);
        std::vector<std::size_t> rows;
        for (std::size_t i = r.begin; i < r.end; ++i)
            if (sims[i] > cfg.t) rows.push_back(i);
        auto better = [&](std::size_t a, std::size_t b) {
            if (sims[a] != sims[b]) return sims[a] > sims[b];
            return store.utterance_id(a) < store.utterance_id(b);
        };
        const std::size_t take = std::min(rows.size(), static_cast<std::size_t>(cfg.k));
        std::partial_sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(take), rows.end(), better);
        auto& list = out[intent];
        for (std::size_t i = 0; i < take; ++i)
            list.push_back({store.utterance_id(rows[i]), store.text(rows[i]), std::clamp(sims[rows[i]], -1.0, 1.0)});
    }
    return out;
}

// --- masking -----------------------------------------------------------------

LabelMask::LabelMask(std::vector<Entry> entries) : entries_(std::move(entries)) {
    for (const auto& e : entries_) {
        if (!forward_.emplace(e.intent, e.masked).second) throw InvalidArgument("label mask: duplicate intent " + e.intent);
        if (!backward_.emplace(e.masked, e.intent).second) throw InvalidArgument("label mask: duplicate name " + e.masked);
    }
}

std::optional<std::string> LabelMask::masked(const IntentId& intent) const {
    auto it = forward_.find(intent);
    if (it == forward_.end()) return std::nullopt;
    return it->second;
}

std::optional<IntentId> LabelMask::unmasked(std::string_view masked_name) const {
    auto it = backward_.find(masked_name);
    if (it == backward_.end()) return std::nullopt;
    return it->second;
}

LabelMask mask_labels(const std::vector<IntentId>& intents, std::uint64_t seed) {
    if (intents.empty()) throw InvalidArgument("mask_labels: no intents");
    const std::size_t n = intents.size();
    std::vector<std::uint32_t> pool(10 * n);
    std::iota(pool.begin(), pool.end(), 0u);
    Rng rng(seed);
    // partial Fisher-Yates: the first n slots become a sample without replacement
    for (std::size_t i = 0; i < n; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform_index(rng, pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    std::vector<LabelMask::Entry> entries;
    for (std::size_t i = 0; i < n; ++i) entries.push_back({intents[i], "Label-" + std::to_string(pool[i])});
    return LabelMask(std::move(entries));
}

// --- templates ---------------------------------------------------------------

PromptTemplates PromptTemplates::defaults() {
    PromptTemplates t;
    t.instructions_with_oos =
        "You are the intent classifier of a task-oriented assistant.\n"
        "Each label below has a description and, when available, example user queries.\n"
        "Read the user query, reason step by step about which labels apply, and then finish with a single line\n"
        "ANSWER: <label>\n"
        "naming the matching label. If several labels apply, separate them with commas.\n"
        "If the query matches none of the labels, finish with the line\n"
        "ANSWER: OOS\n";
    t.instructions_in_scope =
        "You are the intent classifier of a task-oriented assistant.\n"
        "Each label below has a description and, when available, example user queries.\n"
        "Predict one of the in-scope labels listed below; every query belongs to exactly one of them.\n"
        "Read the user query, reason step by step about which label fits best, and then finish with a single line\n"
        "ANSWER: <label>\n";
    t.label_block = "\n### {{label}}\nDescription: {{description}}\n{{examples}}";
    t.examples_header = "Examples:\n";
    t.example_line = "- {{text}}\n";
    t.query_block = "\nQuery: {{query}}\nLet's think step by step.\n";
    t.describe =
        "Write a one-paragraph description of the user intent shared by the example queries below.\n"
        "Describe what the user wants without quoting the examples verbatim.\n"
        "{{examples}}";
    return t;
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
    PromptTemplates t = defaults();
    auto maybe = [&](const char* name, std::string& field) {
        const auto p = dir / (std::string(name) + ".txt");
        if (std::filesystem::exists(p)) field = read_file(p);
    };
    maybe("instructions_with_oos", t.instructions_with_oos);
    maybe("instructions_in_scope", t.instructions_in_scope);
    maybe("label_block", t.label_block);
    maybe("examples_header", t.examples_header);
    maybe("example_line", t.example_line);
    maybe("query_block", t.query_block);
    maybe("describe", t.describe);
    if (std::filesystem::exists(dir / "VERSION")) t.version = text::trim(read_file(dir / "VERSION"));
    return t;
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        const auto open = tmpl.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(tmpl.substr(pos));
            break;
        }
        const auto close = tmpl.find("}}", open + 2);
        if (close == std::string_view::npos) throw FormatError("template: unterminated placeholder");
        out.append(tmpl.substr(pos, open - pos));
        const std::string name = text::trim(tmpl.substr(open + 2, close - open - 2));
        auto it = values.find(name);
        if (it == values.end()) throw FormatError("template: unknown placeholder '" + name + "'");
        out += it->second;
        pos = close + 2;
    }
    return out;
}

// --- prompt assembly ---------------------------------------------------------

namespace {

std::string single_line(std::string_view s) {
    return text::collapse_whitespace(s);
}

} // namespace

std::string PromptBundle::render(const PromptTemplates& templates) const {
    std::string out = instructions;
    for (const auto& b : blocks) {
        std::string examples;
        if (!b.examples.empty()) {
            examples = templates.examples_header;
            for (const auto& e : b.examples) examples += render_template(templates.example_line, {{"text", single_line(e)}});
        }
        out += render_template(templates.label_block,
                               {{"label", b.masked_label}, {"description", single_line(b.description)}, {"examples", examples}});
    }
    out += render_template(templates.query_block, {{"query", single_line(query)}});
    return out;
}

PromptBundle build_prompt(std::string_view query, const RetrievedExamples& retrieved, const LabelMask& mask,
                          const std::map<IntentId, std::string>& descriptions, PromptMode mode,
                          const PromptTemplates& templates) {
    for (const auto& [intent, _] : retrieved)
        if (!mask.masked(intent)) throw InvalidArgument("build_prompt: intent '" + intent + "' is not masked");

    PromptBundle b;
    b.mode = mode;
    b.query = std::string(query);
    b.instructions = mode == PromptMode::with_oos ? templates.instructions_with_oos : templates.instructions_in_scope;
    for (const auto& e : mask.entries()) {
        PromptBundle::Block block;
        block.masked_label = e.masked;
        auto d = descriptions.find(e.intent);
        block.description = d != descriptions.end() && !d->second.empty() ? d->second : "(no description available)";
        if (auto r = retrieved.find(e.intent); r != retrieved.end())
            for (const auto& ex : r->second) block.examples.push_back(ex.text);
        b.blocks.push_back(std::move(block));
    }
    return b;
}

PromptView inspect_prompt(std::string_view prompt) {
    PromptView v;
    v.describe_request = prompt.find(kDescribeMarker) != std::string_view::npos;
    const std::string oos_line = std::string(kAnswerPrefix) + " " + std::string(kOosToken);
    v.oos_allowed = prompt.find(oos_line) != std::string_view::npos;
    for (const auto& raw : text::split(prompt, '\n')) {
        std::string_view line(raw);
        if (line.starts_with(kLabelHeaderPrefix)) v.labels.emplace_back(text::trim(line.substr(kLabelHeaderPrefix.size())));
        else if (line.starts_with(kQueryPrefix)) v.query = std::string(line.substr(kQueryPrefix.size()));
        else if (line.starts_with("- ")) v.example_lines.emplace_back(line.substr(2));
    }
    return v;
}

// --- answer parsing ----------------------------------------------------------

ParsedAnswer parse_response(std::string_view response, const LabelMask& mask) {
    ParsedAnswer out;
    std::optional<std::string> answer;
    for (const auto& raw : text::split(response, '\n')) {
        std::string line = text::trim(raw);
        // tolerate markdown emphasis around the answer line
        while (!line.empty() && (line.front() == '*' || line.front() == '`')) line.erase(line.begin());
        if (text::starts_with_ci(line, kAnswerPrefix)) answer = line.substr(kAnswerPrefix.size());
    }
    if (!answer) {
        out.error = "no ANSWER line";
        return out;
    }
    std::string body = text::trim(*answer);
    while (!body.empty() && (body.front() == '*' || body.front() == '`')) body.erase(body.begin());
    while (!body.empty() && (body.back() == '*' || body.back() == '`' || body.back() == '.')) body.pop_back();
    body = text::trim(body);
    if (body.empty()) {
        out.error = "empty ANSWER line";
        return out;
    }
    if (text::to_lower(body) == text::to_lower(kOosToken)) {
        out.kind = ParsedAnswer::Kind::oos;
        return out;
    }
    std::set<IntentId> seen;
    for (const auto& part : text::split(body, ',')) {
        const std::string name = text::trim(part);
        if (name.empty()) continue;
        auto id = mask.unmasked(name);
        if (!id) {
            out.kind = ParsedAnswer::Kind::failure;
            out.labels.clear();
            out.error = "unknown label '" + name + "'";
            return out;
        }
        if (seen.insert(*id).second) out.labels.push_back(*id);
    }
    if (out.labels.empty()) {
        out.error = "no labels in ANSWER line";
        return out;
    }
    out.kind = ParsedAnswer::Kind::labels;
    return out;
}

LabelSet resolve_answer(const ParsedAnswer& a, ParseFailurePolicy policy) {
    switch (a.kind) {
    case ParsedAnswer::Kind::labels: return LabelSet(a.labels.begin(), a.labels.end());
    case ParsedAnswer::Kind::oos: return {};
    case ParsedAnswer::Kind::failure: break;
    }
    if (policy == ParseFailurePolicy::error) throw ParseFailureError(a.error);
    return {};
}

// --- descriptions ------------------------------------------------------------

std::optional<std::string> DescriptionCache::get(const IntentId& intent, const std::string& dataset_hash) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(intent);
    if (it == entries_.end() || it->second.dataset_hash != dataset_hash) return std::nullopt;
    return it->second.text;
}

void DescriptionCache::put(const IntentId& intent, DescriptionEntry entry) {
    std::unique_lock lock(mu_);
    entries_.insert_or_assign(intent, std::move(entry));
}

std::map<IntentId, std::string> DescriptionCache::texts() const {
    std::shared_lock lock(mu_);
    std::map<IntentId, std::string> out;
    for (const auto& [k, v] : entries_) out[k] = v.text;
    return out;
}

std::size_t DescriptionCache::size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
}

DescriptionCache::DescriptionCache(const DescriptionCache& other) {
    std::shared_lock lock(other.mu_);
    entries_ = other.entries_;
}

DescriptionCache& DescriptionCache::operator=(const DescriptionCache& other) {
    if (this == &other) return *this;
    std::map<IntentId, DescriptionEntry> copy;
    {
        std::shared_lock lock(other.mu_);
        copy = other.entries_;
    }
    std::unique_lock lock(mu_);
    entries_ = std::move(copy);
    return *this;
}

void DescriptionCache::save(const std::filesystem::path& file) const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    {
        std::shared_lock lock(mu_);
        for (const auto& [k, v] : entries_)
            j[k] = {{"text", v.text}, {"generator_model", v.generator_model}, {"dataset_hash", v.dataset_hash}};
    }
    write_file(file, j.dump(2) + "\n");
}

DescriptionCache DescriptionCache::load(const std::filesystem::path& file) {
    DescriptionCache c;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(file));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(file.string() + ": " + e.what());
    }
    for (const auto& [k, v] : j.items())
        c.entries_[k] = {v.at("text").get<std::string>(), v.value("generator_model", ""), v.value("dataset_hash", "")};
    return c;
}

std::string generate_description(const IntentLabel& intent, const std::vector<std::string>& train_examples,
                                 const LlmClient& llm, DescriptionCache& cache, const std::string& dataset_hash,
                                 const PromptTemplates& templates) {
    if (train_examples.empty())
        throw InvalidArgument("generate_description: intent '" + intent.id + "' has no training examples");
    if (auto hit = cache.get(intent.id, dataset_hash)) return *hit;

    std::string examples;
    for (const auto& e : train_examples) examples += "- " + single_line(e) + "\n";
    ChatRequest req;
    req.prompt = render_template(templates.describe, {{"examples", examples}});
    const auto resp = llm.chat(req);
    std::string description = text::collapse_whitespace(resp.text);
    if (description.empty())
        throw LlmMalformedResponse("empty description for intent '" + intent.id + "'");
    cache.put(intent.id, {description, llm.model_id(), dataset_hash});
    return description;
}

void generate_all_descriptions(const Dataset& d, const LlmClient& llm, DescriptionCache& cache,
                               const PromptTemplates& templates) {
    const auto hash = dataset_hash(d);
    for (const auto& intent : d.intents) {
        std::vector<std::string> examples;
        for (const auto& u : d.train)
            if (u.gold_labels.count(intent.id)) examples.push_back(u.text);
        if (examples.empty()) continue;
        generate_description(intent, examples, llm, cache, hash, templates);
    }
}

} // namespace cascade
