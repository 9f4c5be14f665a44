#include "cascade/oos_twostep.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <set>

#include <json.hpp>

#include "cascade/error.hpp"
#include "cascade/evaluation.hpp"
#include "cascade/kernels.hpp"

namespace cascade {

std::string ReprTemplate::render(std::string_view utterance) const {
    return render_template(text, {{"text", std::string(utterance)}});
}

std::span<const double> RepresentationBank::matrix(const IntentId& intent) const {
    const auto r = rows.range(intent);
    return rows.matrix().subspan(r.begin * rows.dim(), r.size() * rows.dim());
}

void RepresentationBank::save(const std::filesystem::path& prefix) const {
    rows.save(prefix);
    nlohmann::ordered_json meta;
    meta["provider_id"] = provider_id;
    meta["template_id"] = template_id;
    write_file(prefix.string() + ".bank.json", meta.dump(2) + "\n");
}

RepresentationBank RepresentationBank::load(const std::filesystem::path& prefix) {
    RepresentationBank b;
    b.rows = VectorStore::load(prefix);
    try {
        const auto meta = nlohmann::json::parse(read_file(prefix.string() + ".bank.json"));
        b.provider_id = meta.at("provider_id").get<std::string>();
        b.template_id = meta.at("template_id").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(prefix.string() + ".bank.json: " + e.what());
    }
    return b;
}

void check_bank_compatible(const RepresentationBank& bank, const RepresentationProvider& provider,
                           const ReprTemplate& tmpl) {
    if (bank.provider_id != provider.id())
        throw FormatError("representation bank was built by '" + bank.provider_id + "', not '" + provider.id() + "'");
    if (bank.template_id != tmpl.id)
        throw FormatError("representation bank was built with template '" + bank.template_id + "', not '" + tmpl.id +
                          "'; rebuild it");
    if (bank.dim() != provider.dim()) throw DimensionMismatch("representation bank dim differs from provider dim");
}

RepresentationBank build_bank(const Dataset& dataset, const RepresentationProvider& provider,
                              const ReprTemplate& tmpl, const std::optional<std::filesystem::path>& checkpoint,
                              const RepresentationBank* resume) {
    RepresentationBank bank;
    bank.rows = VectorStore(provider.dim());
    bank.provider_id = provider.id();
    bank.template_id = tmpl.id;

    const bool can_resume = resume && resume->provider_id == provider.id() && resume->template_id == tmpl.id &&
                            resume->dim() == provider.dim();
    std::size_t done = 0;
    for (const auto& intent : dataset.intents) {
        std::vector<std::uint32_t> ids;
        std::vector<std::string> texts;
        for (std::size_t i = 0; i < dataset.train.size(); ++i) {
            if (!dataset.train[i].gold_labels.count(intent.id)) continue;
            ids.push_back(static_cast<std::uint32_t>(i));
            texts.push_back(dataset.train[i].text);
        }

        std::vector<EmbeddingVector> vecs(ids.size());
        const auto& prior = resume ? resume->rows.intents() : std::vector<IntentId>{};
        if (can_resume && std::find(prior.begin(), prior.end(), intent.id) != prior.end() &&
            resume->rows.range(intent.id).size() == ids.size()) {
            const auto r = resume->rows.range(intent.id);
            for (std::size_t j = 0; j < ids.size(); ++j) {
                const auto row = resume->rows.row(r.begin + j);
                vecs[j] = EmbeddingVector::from_unit(std::vector<double>(row.begin(), row.end()));
            }
        } else {
            std::exception_ptr error;
            const auto n = static_cast<std::ptrdiff_t>(ids.size());
#pragma omp parallel for schedule(dynamic)
            for (std::ptrdiff_t j = 0; j < n; ++j) {
                try {
                    vecs[static_cast<std::size_t>(j)] = provider.repr(tmpl.render(texts[static_cast<std::size_t>(j)]));
                } catch (...) {
#pragma omp critical(cascade_bank_error)
                    if (!error) error = std::current_exception();
                }
            }
            if (error) {
                std::string where;
                if (checkpoint) {
                    bank.save(*checkpoint);
                    where = "; partial bank written to " + checkpoint->string();
                }
                std::string cause;
                try {
                    std::rethrow_exception(error);
                } catch (const std::exception& e) {
                    cause = e.what();
                }
                throw ProviderError("representation provider failed on intent '" + intent.id + "' after " +
                                    std::to_string(done) + " of " + std::to_string(dataset.intents.size()) +
                                    " intents" + where + ": " + cause);
            }
        }
        for (auto& v : vecs)
            if (v.dim() != provider.dim()) throw DimensionMismatch("representation has unexpected dimension");
        bank.rows.append_intent(intent.id, ids, texts, vecs);
        ++done;
    }
    return bank;
}

namespace {

ParsedAnswer ask_in_scope(const std::string& query, const EmbeddingVector& v, const Step1Deps& deps) {
    const auto retrieved = retrieve_icl(v, *deps.store, deps.retrieval);
    const auto bundle =
        build_prompt(query, retrieved, deps.mask, deps.descriptions, PromptMode::in_scope_only, deps.templates);
    ChatRequest req;
    req.prompt = bundle.render(deps.templates);
    req.max_tokens = deps.max_tokens;
    return parse_response(deps.llm->chat(req).text, deps.mask);
}

} // namespace

Step1Result step1_predict(const std::string& query, const Step1Deps& deps) {
    if (!deps.embedder || !deps.store || !deps.llm) throw InvalidArgument("step1: embedder, store and llm are required");
    const auto v = deps.embedder->embed(query);
    std::string last_error;
    for (int attempt = 1; attempt <= 2; ++attempt) {
        const auto parsed = ask_in_scope(query, v, deps);
        if (parsed.kind == ParsedAnswer::Kind::labels && !parsed.labels.empty()) {
            Step1Result r;
            r.intent = parsed.labels.front();
            r.extra_labels.assign(parsed.labels.begin() + 1, parsed.labels.end());
            r.attempts = attempt;
            return r;
        }
        last_error = parsed.kind == ParsedAnswer::Kind::oos ? "answered OOS in an in-scope-only prompt" : parsed.error;
    }
    throw ParseFailureError("step 1 failed twice: " + last_error);
}

std::string_view to_string(Aggregation a) {
    switch (a) {
    case Aggregation::mean: return "mean";
    case Aggregation::max: return "max";
    case Aggregation::top_k_mean: return "top_k_mean";
    }
    return "?";
}

Aggregation aggregation_from_string(std::string_view s) {
    if (s == "mean") return Aggregation::mean;
    if (s == "max") return Aggregation::max;
    if (s == "top_k_mean") return Aggregation::top_k_mean;
    throw InvalidArgument("unknown aggregation '" + std::string(s) + "'");
}

void TwoStepConfig::validate() const {
    if (!(theta >= -1.0 && theta <= 1.0)) throw InvalidArgument("two_step.theta must be in [-1, 1]");
    if (top_k < 1) throw InvalidArgument("two_step.top_k must be >= 1");
}

double step2_score(const EmbeddingVector& query_repr, const RepresentationBank& bank, const IntentId& intent,
                   Aggregation aggregation, int top_k) {
    if (query_repr.dim() != bank.dim()) throw DimensionMismatch("step2: query dim differs from bank dim");
    const auto m = bank.matrix(intent);
    if (m.empty()) throw InvalidArgument("step2: intent '" + intent + "' has no bank rows");
    double s = 0.0;
    if (aggregation == Aggregation::mean) {
        s = kernels::mean_dot(query_repr.values(), m);
    } else {
        std::vector<double> sims(m.size() / bank.dim());
        kernels::dot_rows(query_repr.values(), m, sims);
        std::sort(sims.begin(), sims.end(), std::greater<>());
        const std::size_t k =
            aggregation == Aggregation::max ? 1 : std::min(sims.size(), static_cast<std::size_t>(top_k));
        for (std::size_t i = 0; i < k; ++i) s += sims[i];
        s /= static_cast<double>(k);
    }
    return std::clamp(s, -1.0, 1.0);
}

Decision decide(double score, double theta) {
    return score >= theta ? Decision::in_scope : Decision::oos;
}

CalibrationResult calibrate_threshold(const std::vector<CalibrationPoint>& points,
                                      std::optional<double> max_inscope_drop) {
    std::size_t n_oos = 0;
    for (const auto& p : points) n_oos += p.gold.empty();
    const std::size_t n_in = points.size() - n_oos;
    if (n_oos == 0) throw CalibrationError("cannot calibrate: validation has no OOS examples");
    if (n_in == 0) throw CalibrationError("cannot calibrate: validation has no in-scope examples");
    if (max_inscope_drop && !(*max_inscope_drop >= 0.0 && *max_inscope_drop <= 1.0))
        throw InvalidArgument("max_inscope_drop must be in [0, 1]");

    const std::set<double> candidates = [&] {
        std::set<double> s;
        for (const auto& p : points) s.insert(p.score);
        return s;
    }();

    std::vector<EvalRecord> records(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) records[i].gold = points[i].gold;

    std::optional<CalibrationResult> best;
    for (double theta : candidates) { // ascending, so strict improvement keeps the smaller theta on ties
        std::size_t rejected_in = 0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            records[i].predicted.clear();
            if (decide(points[i].score, theta) == Decision::in_scope) records[i].predicted.insert(points[i].predicted);
            else rejected_in += !points[i].gold.empty();
        }
        CalibrationResult r;
        r.theta = theta;
        r.inscope_rejected = static_cast<double>(rejected_in) / static_cast<double>(n_in);
        if (max_inscope_drop && r.inscope_rejected > *max_inscope_drop) continue;
        r.f1 = micro_f1(records);
        r.oos_recall = oos_recall(records);
        const double objective = max_inscope_drop ? r.oos_recall : r.f1;
        const double incumbent = !best ? -1.0 : (max_inscope_drop ? best->oos_recall : best->f1);
        if (objective > incumbent) best = r;
    }
    // The smallest observed score rejects nothing, so a feasible candidate always exists.
    return *best;
}

TwoStepDetector::TwoStepDetector(Step1Deps step1, std::shared_ptr<const RepresentationProvider> provider,
                                 std::shared_ptr<const RepresentationBank> bank, TwoStepConfig cfg)
    : step1_(std::move(step1)), provider_(std::move(provider)), bank_(std::move(bank)), cfg_(std::move(cfg)) {
    cfg_.validate();
    if (!provider_ || !bank_) throw InvalidArgument("two-step detector: provider and bank are required");
    check_bank_compatible(*bank_, *provider_, cfg_.tmpl);
}

TwoStepDetector::Scored TwoStepDetector::score(const std::string& query) const {
    using Clock = std::chrono::steady_clock;
    Scored s;
    const auto t0 = Clock::now();
    s.step1 = step1_predict(query, step1_);
    const auto t1 = Clock::now();
    const auto q = provider_->repr(cfg_.tmpl.render(query));
    s.score = step2_score(q, *bank_, s.step1.intent, cfg_.aggregation, cfg_.top_k);
    const auto t2 = Clock::now();
    s.llm_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    s.repr_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
    return s;
}

RoutedPrediction TwoStepDetector::predict(const std::string& query) const {
    const auto s = score(query);
    RoutedPrediction out;
    out.source = PredictionSource::two_step;
    out.scores[s.step1.intent] = s.score;
    if (decide(s.score, cfg_.theta) == Decision::in_scope) out.labels.insert(s.step1.intent);
    out.latency.llm_ms = s.llm_ms + s.repr_ms;
    out.latency.total_ms = out.latency.llm_ms;
    return out;
}

} // namespace cascade
