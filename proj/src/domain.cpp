#include "cascade/domain.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cascade/error.hpp"
#include "cascade/random.hpp"
#include "cascade/text.hpp"

namespace cascade {

using ojson = nlohmann::ordered_json;

std::string_view to_string(Origin o) {
    switch (o) {
    case Origin::human: return "human";
    case Origin::augmented: return "augmented";
    case Origin::paraphrase: return "paraphrase";
    }
    return "human";
}

Origin origin_from_string(std::string_view s) {
    if (s == "human") return Origin::human;
    if (s == "augmented") return Origin::augmented;
    if (s == "paraphrase") return Origin::paraphrase;
    throw FormatError("unknown origin '" + std::string(s) + "'");
}

std::string_view to_string(PredictionSource s) {
    switch (s) {
    case PredictionSource::classifier: return "classifier";
    case PredictionSource::llm: return "llm";
    case PredictionSource::two_step: return "two_step";
    }
    return "classifier";
}

std::string_view to_string(Uncertainty u) {
    switch (u) {
    case Uncertainty::certain: return "certain";
    case Uncertainty::uncertain: return "uncertain";
    case Uncertainty::unstable: return "unstable";
    }
    return "certain";
}

std::vector<IntentId> Dataset::intent_ids() const {
    std::vector<IntentId> ids;
    ids.reserve(intents.size());
    for (const auto& i : intents) ids.push_back(i.id);
    return ids;
}

const IntentLabel* Dataset::find_intent(std::string_view id) const {
    for (const auto& i : intents)
        if (i.id == id) return &i;
    return nullptr;
}

std::vector<Violation> validate_dataset(const Dataset& d) {
    std::vector<Violation> out;
    std::set<IntentId> known;
    for (std::size_t i = 0; i < d.intents.size(); ++i) {
        const auto& intent = d.intents[i];
        const std::string rec = "intents[" + std::to_string(i) + "]";
        if (intent.id.empty()) out.push_back({rec, "intent id is empty"});
        else if (!known.insert(intent.id).second)
            out.push_back({rec, "duplicate intent id '" + intent.id + "'"});
    }

    auto check = [&](const std::vector<LabeledUtterance>& list, std::string_view split, bool must_be_oos,
                     bool must_be_in_scope) {
        for (std::size_t i = 0; i < list.size(); ++i) {
            const auto& u = list[i];
            const std::string rec = std::string(split) + "[" + std::to_string(i) + "]";
            if (text::trim(u.text).empty()) out.push_back({rec, "text is empty"});
            for (const auto& l : u.gold_labels) {
                if (!known.count(l)) out.push_back({rec, "unknown label '" + l + "'"});
            }
            if (u.origin == Origin::augmented && !u.gold_labels.empty())
                out.push_back({rec, "augmented utterance carries gold labels"});
            if (must_be_oos && !u.gold_labels.empty())
                out.push_back({rec, "OOS validation utterance carries gold labels"});
            if (must_be_in_scope && u.gold_labels.empty())
                out.push_back({rec, "in-scope validation utterance has no gold labels"});
        }
    };
    check(d.train, "train", false, false);
    check(d.valid_in_scope, "valid_in_scope", false, true);
    check(d.valid_oos, "valid_oos", true, false);
    return out;
}

namespace {

ojson utterance_json(const LabeledUtterance& u, std::string_view split) {
    ojson j;
    j["text"] = u.text;
    j["labels"] = ojson::array();
    for (const auto& l : u.gold_labels) j["labels"].push_back(l);
    j["split"] = split;
    j["origin"] = to_string(u.origin);
    return j;
}

} // namespace

std::string serialize_utterances(const Dataset& d) {
    std::string out;
    auto emit = [&](const std::vector<LabeledUtterance>& list, std::string_view split) {
        for (const auto& u : list) {
            out += utterance_json(u, split).dump();
            out += '\n';
        }
    };
    emit(d.train, "train");
    emit(d.valid_in_scope, "valid");
    emit(d.valid_oos, "valid");
    return out;
}

std::string serialize_intents(const std::vector<IntentLabel>& intents) {
    ojson arr = ojson::array();
    for (const auto& i : intents) {
        ojson j;
        j["id"] = i.id;
        j["display_name"] = i.display_name;
        j["description"] = i.description ? ojson(*i.description) : ojson(nullptr);
        arr.push_back(std::move(j));
    }
    return arr.dump(2) + "\n";
}

void parse_utterances(std::string_view jsonl, Dataset& d) {
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < jsonl.size()) {
        auto end = jsonl.find('\n', start);
        if (end == std::string_view::npos) end = jsonl.size();
        const auto line = jsonl.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (text::trim(line).empty()) continue;

        const std::string where = "line " + std::to_string(line_no);
        ojson j;
        try {
            j = ojson::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(where + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("text") || !j["text"].is_string())
            throw FormatError(where + ": missing string field 'text'");

        LabeledUtterance u;
        u.text = j["text"].get<std::string>();
        if (j.contains("labels")) {
            if (!j["labels"].is_array()) throw FormatError(where + ": 'labels' must be an array");
            for (const auto& l : j["labels"]) {
                if (!l.is_string()) throw FormatError(where + ": labels must be strings");
                u.gold_labels.insert(l.get<std::string>());
            }
        }
        u.origin = j.contains("origin") ? origin_from_string(j["origin"].get<std::string>()) : Origin::human;
        const std::string split = j.value("split", std::string("train"));
        if (split == "train") d.train.push_back(std::move(u));
        else if (split == "valid") (u.gold_labels.empty() ? d.valid_oos : d.valid_in_scope).push_back(std::move(u));
        else throw FormatError(where + ": unknown split '" + split + "'");
    }
}

std::vector<IntentLabel> parse_intents(std::string_view json) {
    ojson j;
    try {
        j = ojson::parse(json);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("intents: ") + e.what());
    }
    if (!j.is_array()) throw FormatError("intents file must hold a JSON array");
    std::vector<IntentLabel> out;
    for (const auto& item : j) {
        if (!item.is_object() || !item.contains("id") || !item["id"].is_string())
            throw FormatError("intent entry without string 'id'");
        IntentLabel l;
        l.id = item["id"].get<std::string>();
        l.display_name = item.value("display_name", l.id);
        if (item.contains("description") && item["description"].is_string())
            l.description = item["description"].get<std::string>();
        out.push_back(std::move(l));
    }
    return out;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& p, std::string_view content) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + p.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("short write to '" + p.string() + "'");
}

Dataset load_dataset(const std::filesystem::path& intents_file, const std::filesystem::path& utterances_file) {
    Dataset d;
    d.intents = parse_intents(read_file(intents_file));
    parse_utterances(read_file(utterances_file), d);
    return d;
}

void save_dataset(const Dataset& d, const std::filesystem::path& intents_file,
                  const std::filesystem::path& utterances_file) {
    write_file(intents_file, serialize_intents(d.intents));
    write_file(utterances_file, serialize_utterances(d));
}

std::string dataset_hash(const Dataset& d) {
    const auto h = fnv1a64(serialize_utterances(d), fnv1a64(serialize_intents(d.intents)));
    return text::hex64(h);
}

} // namespace cascade
