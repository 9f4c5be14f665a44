#include "cascade/app.hpp"

#include <cstdlib>
#include <exception>
#include <set>

#include "cascade/error.hpp"
#include "cascade/kernels.hpp"
#include "cascade/labelspace.hpp"

namespace cascade::app {

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

using json = nlohmann::json;

// Reads the keys of one JSON object, remembering which were consumed so the
// rest can be reported as unknown.
class Section {
public:
    Section(const json* obj, std::string prefix, std::vector<std::string>& errors)
        : obj_(obj), prefix_(std::move(prefix)), errors_(errors) {
        if (obj_ && !obj_->is_object()) {
            errors_.push_back(prefix_ + ": expected an object");
            obj_ = nullptr;
        }
    }

    template <typename T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        if (!obj_ || !obj_->contains(key)) return;
        const auto& v = obj_->at(key);
        if (v.is_null()) return;
        try {
            out = v.get<T>();
        } catch (const json::exception&) {
            errors_.push_back(path(key) + ": wrong type (" + std::string(v.type_name()) + ")");
        }
    }

    template <typename T>
    void get_optional(const std::string& key, std::optional<T>& out) {
        seen_.insert(key);
        if (!obj_ || !obj_->contains(key) || obj_->at(key).is_null()) return;
        T tmp{};
        get(key, tmp);
        out = tmp;
    }

    Section child(const std::string& key) {
        seen_.insert(key);
        const json* c = obj_ && obj_->contains(key) && !obj_->at(key).is_null() ? &obj_->at(key) : nullptr;
        return Section(c, path(key), errors_);
    }

    std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }
    void error(const std::string& key, const std::string& msg) { errors_.push_back(path(key) + ": " + msg); }

    void finish() {
        if (!obj_) return;
        for (const auto& [k, _] : obj_->items())
            if (!seen_.count(k)) errors_.push_back(path(k) + ": unknown key");
    }

private:
    const json* obj_;
    std::string prefix_;
    std::vector<std::string>& errors_;
    std::set<std::string> seen_;
};

void read_endpoint(Section& s, HttpEndpoint& e) {
    s.get("url", e.url);
    s.get("path", e.path);
    long long timeout = e.timeout.count();
    s.get("timeout_ms", timeout);
    e.timeout = std::chrono::milliseconds(timeout);
    s.get("retries", e.retries);
}

json endpoint_json(const HttpEndpoint& e) {
    return {{"url", e.url}, {"path", e.path}, {"timeout_ms", e.timeout.count()}, {"retries", e.retries}};
}

template <typename F>
void check(std::vector<std::string>& errors, const std::string& key, F&& f) {
    try {
        f();
    } catch (const Error& e) {
        errors.push_back(key + ": " + e.what());
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
    return p.is_absolute() || p.empty() ? p : base / p;
}

} // namespace

RouterPolicy RunConfig::router_policy() const {
    RouterPolicy p;
    p.mc = mc;
    p.retrieval = retrieval;
    p.unstable_action = unstable_action;
    p.fallback_to_classifier = fallback_to_classifier;
    p.batched_mc = batched_mc;
    p.parse_policy = parse_policy;
    return p;
}

RunConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
    RunConfig cfg;
    std::vector<std::string> errors;
    Section root(&j, "", errors);

    root.get("seed", cfg.seed);
    {
        auto s = root.child("dataset");
        std::string intents, utterances;
        s.get("intents", intents);
        s.get("utterances", utterances);
        cfg.intents_file = resolve(base_dir, intents);
        cfg.utterances_file = resolve(base_dir, utterances);
        s.finish();
    }
    {
        std::string wd = cfg.work_dir.string();
        root.get("work_dir", wd);
        cfg.work_dir = resolve(base_dir, wd);
        std::optional<std::string> td;
        root.get_optional("templates_dir", td);
        if (td) cfg.templates_dir = resolve(base_dir, *td);
    }
    {
        auto s = root.child("embedding");
        s.get("kind", cfg.embedding.kind);
        s.get("dim", cfg.embedding.dim);
        read_endpoint(s, cfg.embedding.endpoint);
        if (cfg.embedding.kind != "hashing" && cfg.embedding.kind != "remote")
            s.error("kind", "must be 'hashing' or 'remote'");
        s.finish();
    }
    {
        auto s = root.child("augmentation");
        auto& a = cfg.augmentation;
        s.get("ratio", a.ratio);
        s.get("replace_string_len", a.replace_string_len);
        s.get("removal_prob", a.removal_prob);
        s.get("max_keywords", a.max_keywords);
        s.finish();
        check(errors, "augmentation", [&] { a.validate(); });
    }
    {
        auto s = root.child("train");
        auto& t = cfg.train;
        s.get("learning_rate", t.learning_rate);
        s.get("epochs", t.epochs);
        s.get("batch_size", t.batch_size);
        s.get("l2", t.l2);
        s.get("threshold", t.threshold);
        s.finish();
        check(errors, "train", [&] { t.validate(); });
    }
    {
        auto s = root.child("mc");
        s.get("samples", cfg.mc.samples);
        s.get("dropout_p", cfg.mc.dropout_p);
        s.finish();
        check(errors, "mc", [&] { cfg.mc.validate(); });
    }
    {
        auto s = root.child("retrieval");
        s.get("k", cfg.retrieval.k);
        s.get("t", cfg.retrieval.t);
        s.finish();
        check(errors, "retrieval", [&] { cfg.retrieval.validate(); });
    }
    {
        auto s = root.child("router");
        std::string action(to_string(cfg.unstable_action));
        std::string parse = "treat_as_oos";
        s.get("unstable_action", action);
        s.get("fallback_to_classifier", cfg.fallback_to_classifier);
        s.get("batched_mc", cfg.batched_mc);
        s.get("parse_failure", parse);
        check(errors, s.path("unstable_action"), [&] { cfg.unstable_action = unstable_action_from_string(action); });
        if (parse == "treat_as_oos") cfg.parse_policy = ParseFailurePolicy::treat_as_oos;
        else if (parse == "error") cfg.parse_policy = ParseFailurePolicy::error;
        else s.error("parse_failure", "must be 'treat_as_oos' or 'error'");
        s.finish();
    }
    {
        auto s = root.child("llm");
        s.get("kind", cfg.llm.kind);
        read_endpoint(s, cfg.llm.http.endpoint);
        s.get("model", cfg.llm.http.model);
        s.get("max_in_flight", cfg.llm.http.max_in_flight);
        if (cfg.llm.kind != "mock" && cfg.llm.kind != "http") s.error("kind", "must be 'mock' or 'http'");
        auto m = s.child("mock");
        m.get("error_rate", cfg.llm.mock.error_rate);
        m.get("oos_miss_rate", cfg.llm.mock.oos_miss_rate);
        m.get("latency_ms", cfg.llm.mock.simulated_latency_ms);
        m.finish();
        s.finish();
    }
    {
        auto s = root.child("repr");
        s.get("kind", cfg.repr.kind);
        s.get("dim", cfg.repr.dim);
        read_endpoint(s, cfg.repr.endpoint);
        if (cfg.repr.kind != "embedder" && cfg.repr.kind != "http") s.error("kind", "must be 'embedder' or 'http'");
        s.finish();
    }
    {
        auto s = root.child("two_step");
        auto& t = cfg.two_step;
        std::string agg(to_string(t.aggregation));
        s.get("theta", t.theta);
        s.get("aggregation", agg);
        s.get("top_k", t.top_k);
        s.get("template_id", t.tmpl.id);
        s.get("template", t.tmpl.text);
        s.get_optional("max_inscope_drop", cfg.max_inscope_drop);
        check(errors, s.path("aggregation"), [&] { t.aggregation = aggregation_from_string(agg); });
        check(errors, "two_step", [&] { t.validate(); });
        s.finish();
    }
    {
        auto s = root.child("report");
        std::string mode(to_string(cfg.report.f1_mode));
        std::string match = "any";
        s.get("f1_mode", mode);
        s.get("inscope_match", match);
        s.get("include_timing", cfg.report.include_timing);
        check(errors, s.path("f1_mode"), [&] { cfg.report.f1_mode = f1_mode_from_string(mode); });
        if (match == "any") cfg.report.inscope_match = InScopeMatch::any;
        else if (match == "exact") cfg.report.inscope_match = InScopeMatch::exact;
        else s.error("inscope_match", "must be 'any' or 'exact'");
        s.finish();
    }
    root.finish();

    if (const char* v = std::getenv("CASCADE_LLM_URL")) cfg.llm.http.endpoint.url = v;
    if (const char* v = std::getenv("CASCADE_LLM_TOKEN")) cfg.llm.http.endpoint.bearer_token = v;
    if (const char* v = std::getenv("CASCADE_EMBED_URL")) cfg.embedding.endpoint.url = v;
    if (const char* v = std::getenv("CASCADE_REPR_URL")) cfg.repr.endpoint.url = v;

    if (!errors.empty()) {
        std::string msg = "invalid config (" + std::to_string(errors.size()) + " problem" +
                          (errors.size() == 1 ? "" : "s") + ")";
        for (const auto& e : errors) msg += "\n  " + e;
        throw FormatError(msg);
    }
    apply_seed_tree(cfg);
    return cfg;
}

RunConfig load_config(const std::filesystem::path& file) {
    json j;
    try {
        j = json::parse(read_file(file));
    } catch (const json::exception& e) {
        throw FormatError(file.string() + ": " + e.what());
    }
    auto cfg = parse_config(j, file.parent_path());
    std::vector<std::string> missing;
    for (const auto& p : {cfg.intents_file, cfg.utterances_file})
        if (p.empty() || !std::filesystem::exists(p)) missing.push_back(p.empty() ? "(unset)" : p.string());
    if (!missing.empty()) {
        std::string msg = file.string() + ": dataset files not found";
        for (const auto& m : missing) msg += "\n  " + m;
        throw IoError(msg);
    }
    return cfg;
}

nlohmann::ordered_json config_to_json(const RunConfig& cfg) {
    nlohmann::ordered_json j;
    j["seed"] = cfg.seed;
    j["dataset"] = {{"intents", cfg.intents_file.string()}, {"utterances", cfg.utterances_file.string()}};
    j["work_dir"] = cfg.work_dir.string();
    j["templates_dir"] = cfg.templates_dir ? json(cfg.templates_dir->string()) : json(nullptr);
    auto emb = endpoint_json(cfg.embedding.endpoint);
    emb["kind"] = cfg.embedding.kind;
    emb["dim"] = cfg.embedding.dim;
    j["embedding"] = emb;
    j["augmentation"] = {{"ratio", cfg.augmentation.ratio},
                         {"replace_string_len", cfg.augmentation.replace_string_len},
                         {"removal_prob", cfg.augmentation.removal_prob},
                         {"max_keywords", cfg.augmentation.max_keywords}};
    j["train"] = {{"learning_rate", cfg.train.learning_rate}, {"epochs", cfg.train.epochs},
                  {"batch_size", cfg.train.batch_size},       {"l2", cfg.train.l2},
                  {"threshold", cfg.train.threshold}};
    j["mc"] = {{"samples", cfg.mc.samples}, {"dropout_p", cfg.mc.dropout_p}};
    j["retrieval"] = {{"k", cfg.retrieval.k}, {"t", cfg.retrieval.t}};
    j["router"] = {{"unstable_action", to_string(cfg.unstable_action)},
                   {"fallback_to_classifier", cfg.fallback_to_classifier},
                   {"batched_mc", cfg.batched_mc},
                   {"parse_failure", cfg.parse_policy == ParseFailurePolicy::error ? "error" : "treat_as_oos"}};
    auto llm = endpoint_json(cfg.llm.http.endpoint);
    llm["kind"] = cfg.llm.kind;
    llm["model"] = cfg.llm.http.model;
    llm["max_in_flight"] = cfg.llm.http.max_in_flight;
    llm["mock"] = {{"error_rate", cfg.llm.mock.error_rate},
                   {"oos_miss_rate", cfg.llm.mock.oos_miss_rate},
                   {"latency_ms", cfg.llm.mock.simulated_latency_ms}};
    j["llm"] = llm;
    auto repr = endpoint_json(cfg.repr.endpoint);
    repr["kind"] = cfg.repr.kind;
    repr["dim"] = cfg.repr.dim;
    j["repr"] = repr;
    j["two_step"] = {{"theta", cfg.two_step.theta},
                     {"aggregation", to_string(cfg.two_step.aggregation)},
                     {"top_k", cfg.two_step.top_k},
                     {"template_id", cfg.two_step.tmpl.id},
                     {"template", cfg.two_step.tmpl.text},
                     {"max_inscope_drop", cfg.max_inscope_drop ? json(*cfg.max_inscope_drop) : json(nullptr)}};
    j["report"] = {{"f1_mode", to_string(cfg.report.f1_mode)},
                   {"inscope_match", cfg.report.inscope_match == InScopeMatch::any ? "any" : "exact"},
                   {"include_timing", cfg.report.include_timing}};
    return j;
}

void apply_seed_tree(RunConfig& cfg) {
    cfg.augmentation.seed = derive_seed(cfg.seed, "augment");
    cfg.train.seed = derive_seed(cfg.seed, "train");
    cfg.mc.seed = derive_seed(cfg.seed, "mc");
    cfg.llm.mock.seed = derive_seed(cfg.seed, "llm");
}

std::uint64_t mask_seed(const RunConfig& cfg) {
    return derive_seed(cfg.seed, "mask");
}

// ---------------------------------------------------------------------------
// Providers and artifacts
// ---------------------------------------------------------------------------

Dataset load_config_dataset(const RunConfig& cfg) {
    auto d = load_dataset(cfg.intents_file, cfg.utterances_file);
    if (auto v = validate_dataset(d); !v.empty()) {
        std::string msg = "dataset failed validation";
        for (const auto& x : v) msg += "\n  " + x.record + ": " + x.message;
        throw FormatError(msg);
    }
    return d;
}

std::shared_ptr<const EmbeddingProvider> make_embedder(const RunConfig& cfg) {
    if (cfg.embedding.kind == "remote") return std::make_shared<RemoteEmbedder>(cfg.embedding.endpoint, cfg.embedding.dim);
    return std::make_shared<HashingEmbedder>(cfg.embedding.dim);
}

std::shared_ptr<const RepresentationProvider> make_repr_provider(const RunConfig& cfg) {
    if (cfg.repr.kind == "http") return std::make_shared<HttpRepresentationProvider>(cfg.repr.endpoint, cfg.repr.dim);
    return std::make_shared<EmbedderRepresentationProvider>(make_embedder(cfg));
}

PromptTemplates load_templates(const RunConfig& cfg) {
    return cfg.templates_dir ? PromptTemplates::load(*cfg.templates_dir) : PromptTemplates::defaults();
}

void save_mask(const LabelMask& mask, const std::filesystem::path& file) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& e : mask.entries()) j.push_back({{"intent", e.intent}, {"masked", e.masked}});
    write_file(file, j.dump(2) + "\n");
}

LabelMask load_mask(const std::filesystem::path& file) {
    try {
        std::vector<LabelMask::Entry> entries;
        for (const auto& e : json::parse(read_file(file)))
            entries.push_back({e.at("intent").get<std::string>(), e.at("masked").get<std::string>()});
        return LabelMask(std::move(entries));
    } catch (const json::exception& e) {
        throw FormatError(file.string() + ": " + e.what());
    }
}

namespace {

std::vector<LabeledUtterance> read_utterance_list(const std::filesystem::path& file) {
    Dataset d;
    parse_utterances(read_file(file), d);
    std::vector<LabeledUtterance> out = d.train;
    out.insert(out.end(), d.valid_in_scope.begin(), d.valid_in_scope.end());
    out.insert(out.end(), d.valid_oos.begin(), d.valid_oos.end());
    return out;
}

std::shared_ptr<const LlmClient> make_llm(const RunConfig& cfg, const Dataset& d, const LabelMask& mask,
                                          std::shared_ptr<const EmbeddingProvider> embedder,
                                          std::shared_ptr<const VectorStore> store) {
    auto log = std::make_shared<RequestLog>(Artifacts{cfg.work_dir}.requests());
    if (cfg.llm.kind == "http") return std::make_shared<HttpLlmClient>(cfg.llm.http, log);
    auto mock = std::make_shared<MockLlm>(dataset_oracle(d), mask, cfg.llm.mock, log);
    if (store && embedder) {
        // Queries without a gold label in an in-scope-only prompt go to the
        // intent of the most similar stored sentence.
        mock->set_nearest([embedder, store](const std::string& q) -> IntentId {
            const auto v = embedder->embed(q);
            std::vector<double> sims(store->rows());
            kernels::dot_rows(v.values(), store->matrix(), sims);
            std::size_t best = 0;
            for (std::size_t r = 1; r < sims.size(); ++r)
                if (sims[r] > sims[best]) best = r;
            for (const auto& id : store->intents()) {
                const auto range = store->range(id);
                if (best >= range.begin && best < range.end) return id;
            }
            return store->intents().front();
        });
    }
    return mock;
}

} // namespace

std::vector<LabeledUtterance> run_augment(const RunConfig& cfg) {
    const auto d = load_config_dataset(cfg);
    const auto embedder = make_embedder(cfg);
    auto out = augment_dataset(d.train, cfg.augmentation, *embedder);
    Dataset holder;
    holder.train = out;
    write_file(Artifacts{cfg.work_dir}.augmented(), serialize_utterances(holder));
    return out;
}

TrainSummary run_train(const RunConfig& cfg) {
    const Artifacts art{cfg.work_dir};
    const auto d = load_config_dataset(cfg);
    const auto embedder = make_embedder(cfg);
    std::vector<LabeledUtterance> negatives;
    if (std::filesystem::exists(art.augmented())) negatives = read_utterance_list(art.augmented());

    TrainReport report;
    const auto set = make_training_set(*embedder, d, negatives);
    const auto head = train_head(set, cfg.train, &report);
    head.save(art.head());
    build_store(*embedder, d).save(art.store());
    save_mask(mask_labels(d.intent_ids(), mask_seed(cfg)), art.mask());

    TrainSummary s;
    s.examples = set.size();
    s.augmented = negatives.size();
    s.epoch_loss = report.epoch_loss;
    return s;
}

Bundle load_bundle(const RunConfig& cfg) {
    const Artifacts art{cfg.work_dir};
    Bundle b;
    b.dataset = load_config_dataset(cfg);
    b.embedder = make_embedder(cfg);
    b.head = std::make_shared<HeadModel>(HeadModel::load(art.head()));
    b.store = std::make_shared<VectorStore>(VectorStore::load(art.store()));
    b.mask = load_mask(art.mask());
    b.templates = load_templates(cfg);
    if (std::filesystem::exists(art.descriptions())) {
        const auto cache = DescriptionCache::load(art.descriptions());
        const auto hash = dataset_hash(b.dataset);
        for (const auto& intent : b.dataset.intents)
            if (auto text = cache.get(intent.id, hash)) b.descriptions[intent.id] = *text;
    }
    b.llm = make_llm(cfg, b.dataset, b.mask, b.embedder, b.store);
    return b;
}

Router make_router(const Bundle& b, const RunConfig& cfg) {
    RouterDeps deps;
    deps.embedder = b.embedder;
    deps.head = b.head;
    deps.store = b.store;
    deps.mask = b.mask;
    deps.descriptions = b.descriptions;
    deps.llm = b.llm;
    deps.templates = b.templates;
    return Router(std::move(deps), cfg.router_policy());
}

std::size_t run_descriptions(const RunConfig& cfg) {
    const Artifacts art{cfg.work_dir};
    const auto d = load_config_dataset(cfg);
    DescriptionCache cache;
    if (std::filesystem::exists(art.descriptions())) cache = DescriptionCache::load(art.descriptions());
    const auto mask = std::filesystem::exists(art.mask()) ? load_mask(art.mask())
                                                          : mask_labels(d.intent_ids(), mask_seed(cfg));
    const auto llm = make_llm(cfg, d, mask, nullptr, nullptr);
    generate_all_descriptions(d, *llm, cache, load_templates(cfg));
    cache.save(art.descriptions());
    return cache.size();
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

std::string_view to_string(System s) {
    switch (s) {
    case System::classifier: return "classifier";
    case System::llm: return "llm";
    case System::hybrid: return "hybrid";
    case System::two_step: return "two_step";
    }
    return "?";
}

System system_from_string(std::string_view s) {
    if (s == "classifier") return System::classifier;
    if (s == "llm") return System::llm;
    if (s == "hybrid") return System::hybrid;
    if (s == "two_step") return System::two_step;
    throw InvalidArgument("unknown system '" + std::string(s) + "' (classifier, llm, hybrid, two_step)");
}

namespace {

std::vector<const LabeledUtterance*> validation_split(const Dataset& d) {
    std::vector<const LabeledUtterance*> out;
    for (const auto& u : d.valid_in_scope) out.push_back(&u);
    for (const auto& u : d.valid_oos) out.push_back(&u);
    if (out.empty()) throw InvalidArgument("dataset has no validation records");
    return out;
}

template <typename F>
void parallel_for(std::size_t n, F&& f) {
    std::exception_ptr error;
    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
            f(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical(cascade_app_error)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
}

EvalRecord record_from(const LabeledUtterance& u, const RoutedPrediction& p) {
    EvalRecord r;
    r.gold = u.gold_labels;
    r.predicted = p.labels;
    r.latency = p.latency;
    r.routed_to_llm = p.source == PredictionSource::llm || p.llm_failed;
    return r;
}

std::shared_ptr<const RepresentationBank> load_or_build_bank(const RunConfig& cfg, const Dataset& d,
                                                             const RepresentationProvider& provider) {
    const Artifacts art{cfg.work_dir};
    if (std::filesystem::exists(art.bank().string() + ".bank.json")) {
        auto bank = RepresentationBank::load(art.bank());
        check_bank_compatible(bank, provider, cfg.two_step.tmpl);
        return std::make_shared<RepresentationBank>(std::move(bank));
    }
    auto bank = build_bank(d, provider, cfg.two_step.tmpl, art.bank().string() + ".partial");
    bank.save(art.bank());
    return std::make_shared<RepresentationBank>(std::move(bank));
}

} // namespace

std::vector<EvalRecord> evaluate_records(const RunConfig& cfg, System system, bool calibrate, double* theta_out) {
    const auto b = load_bundle(cfg);
    const auto tests = validation_split(b.dataset);
    std::vector<EvalRecord> records(tests.size());

    if (system == System::two_step) {
        Step1Deps s1;
        s1.embedder = b.embedder;
        s1.store = b.store;
        s1.mask = b.mask;
        s1.descriptions = b.descriptions;
        s1.llm = b.llm;
        s1.templates = b.templates;
        s1.retrieval = cfg.retrieval;
        const auto provider = make_repr_provider(cfg);
        TwoStepDetector det(s1, provider, load_or_build_bank(cfg, b.dataset, *provider), cfg.two_step);
        std::vector<TwoStepDetector::Scored> scored(tests.size());
        parallel_for(tests.size(), [&](std::size_t i) { scored[i] = det.score(tests[i]->text); });

        double theta = cfg.two_step.theta;
        if (calibrate) {
            std::vector<CalibrationPoint> points;
            for (std::size_t i = 0; i < tests.size(); ++i)
                points.push_back({tests[i]->gold_labels, scored[i].step1.intent, scored[i].score});
            theta = calibrate_threshold(points, cfg.max_inscope_drop).theta;
        }
        if (theta_out) *theta_out = theta;
        for (std::size_t i = 0; i < tests.size(); ++i) {
            auto& r = records[i];
            r.gold = tests[i]->gold_labels;
            if (decide(scored[i].score, theta) == Decision::in_scope) r.predicted.insert(scored[i].step1.intent);
            r.oos_score = scored[i].score;
            r.latency.llm_ms = scored[i].llm_ms + scored[i].repr_ms;
            r.latency.total_ms = r.latency.llm_ms;
            r.routed_to_llm = true;
        }
        return records;
    }

    const auto router = make_router(b, cfg);
    parallel_for(tests.size(), [&](std::size_t i) {
        const auto& u = *tests[i];
        switch (system) {
        case System::classifier: {
            const auto p = router.classify_only(u.text);
            auto r = record_from(u, p);
            r.label_scores = p.scores;
            double best = 0.0;
            for (const auto& [_, s] : p.scores) best = std::max(best, s);
            r.oos_score = best;
            records[i] = std::move(r);
            break;
        }
        case System::llm:
        case System::hybrid: {
            const auto p = system == System::llm ? router.llm_only(u.text) : router.route(u.text);
            auto r = record_from(u, p);
            r.oos_score = p.labels.empty() ? 0.0 : 1.0;
            records[i] = std::move(r);
            break;
        }
        case System::two_step: break;
        }
    });
    return records;
}

Report run_evaluate(const RunConfig& cfg, const std::vector<System>& systems, bool calibrate) {
    Report report;
    report.options = cfg.report;
    const std::string dataset = cfg.utterances_file.stem().string();
    for (auto s : systems) {
        double theta = 0.0;
        const auto records = evaluate_records(cfg, s, calibrate, &theta);
        auto row = summarize(dataset, std::string(to_string(s)), records, cfg.report);
        if (s == System::two_step) row.best_threshold = theta;
        report.rows.push_back(std::move(row));
    }
    return report;
}

nlohmann::ordered_json prediction_json(const RoutedPrediction& p, bool include_timing) {
    nlohmann::ordered_json j;
    j["labels"] = nlohmann::ordered_json::array();
    for (const auto& l : p.labels) j["labels"].push_back(l);
    j["source"] = to_string(p.source);
    j["uncertainty"] = to_string(p.uncertainty);
    j["distinct_count"] = p.distinct_count;
    j["scores"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : p.scores) j["scores"][k] = v;
    if (include_timing)
        j["latency_ms"] = {{"classifier", p.latency.classifier_ms}, {"llm", p.latency.llm_ms}, {"total", p.latency.total_ms}};
    if (p.llm_failed) j["llm_failed"] = true;
    if (p.parse_failed) j["parse_failed"] = true;
    return j;
}

std::vector<RoutedPrediction> run_route(const RunConfig& cfg, const std::vector<std::string>& queries) {
    const auto b = load_bundle(cfg);
    return make_router(b, cfg).batch_route(queries).predictions;
}

RepresentationBank run_build_bank(const RunConfig& cfg) {
    const Artifacts art{cfg.work_dir};
    const auto d = load_config_dataset(cfg);
    const auto provider = make_repr_provider(cfg);
    const auto partial = art.bank().string() + ".partial";
    std::optional<RepresentationBank> resume;
    if (std::filesystem::exists(partial + ".bank.json")) resume = RepresentationBank::load(partial);
    auto bank = build_bank(d, *provider, cfg.two_step.tmpl, partial, resume ? &*resume : nullptr);
    bank.save(art.bank());
    return bank;
}

std::string run_labspace(const RunConfig& cfg, const std::string& system, const std::filesystem::path& leaves_file,
                         int repeats, const std::vector<int>& scopes, const std::vector<int>& labels) {
    const auto leaves = lab::load_leaves(leaves_file);
    lab::GridConfig grid;
    grid.repeats = repeats;
    grid.seed = cfg.seed;
    if (!scopes.empty()) grid.scopes = scopes;
    if (!labels.empty()) grid.labels = labels;

    std::unique_ptr<lab::LabSystem> sys;
    const auto embedder = make_embedder(cfg);
    if (system == "oracle") {
        sys = std::make_unique<lab::OracleSystem>();
    } else if (system == "classifier") {
        sys = std::make_unique<lab::ClassifierSystem>(embedder);
    } else if (system == "mock_llm") {
        const auto mock_cfg = cfg.llm.mock;
        sys = std::make_unique<lab::LlmSystem>("mock_llm", embedder, [mock_cfg](const lab::Experiment& e, const LabelMask& m) {
            return std::make_shared<MockLlm>(dataset_oracle(e.dataset), m, mock_cfg);
        });
    } else if (system == "llm") {
        const auto http = cfg.llm.http;
        sys = std::make_unique<lab::LlmSystem>("llm", embedder, [http](const lab::Experiment&, const LabelMask&) {
            return std::make_shared<HttpLlmClient>(http);
        });
    } else {
        throw InvalidArgument("unknown labspace system '" + system + "' (oracle, classifier, mock_llm, llm)");
    }
    return lab::grid_csv(sys->name(), lab::run_grid(leaves, *sys, grid));
}

} // namespace cascade::app
