#include "cascade/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cascade/error.hpp"
#include "cascade/kernels.hpp"

namespace cascade {

std::string_view to_string(F1Mode m) {
    return m == F1Mode::micro ? "micro" : "macro";
}

F1Mode f1_mode_from_string(std::string_view s) {
    if (s == "micro") return F1Mode::micro;
    if (s == "macro") return F1Mode::macro;
    throw InvalidArgument("unknown F1 mode '" + std::string(s) + "'");
}

namespace {

LabelSet with_oos(const LabelSet& s) {
    return s.empty() ? LabelSet{kOosPseudoLabel} : s;
}

struct Counts {
    double tp = 0, fp = 0, fn = 0;
};

double f1_of(const Counts& c) {
    const double denom = 2 * c.tp + c.fp + c.fn;
    return denom == 0 ? 1.0 : 2 * c.tp / denom;
}

} // namespace

double micro_f1(const std::vector<EvalRecord>& records) {
    return f1_score(records, F1Mode::micro);
}

double f1_score(const std::vector<EvalRecord>& records, F1Mode mode) {
    if (records.empty()) throw InvalidArgument("f1: no records");
    std::map<IntentId, Counts> per_class;
    Counts total;
    for (const auto& r : records) {
        const auto g = with_oos(r.gold);
        const auto p = with_oos(r.predicted);
        for (const auto& l : p) {
            if (g.count(l)) {
                ++per_class[l].tp;
                ++total.tp;
            } else {
                ++per_class[l].fp;
                ++total.fp;
            }
        }
        for (const auto& l : g) {
            if (!p.count(l)) {
                ++per_class[l].fn;
                ++total.fn;
            }
        }
    }
    if (mode == F1Mode::micro) return f1_of(total);
    double sum = 0.0;
    for (const auto& [_, c] : per_class) sum += f1_of(c);
    return sum / static_cast<double>(per_class.size());
}

double oos_recall(const std::vector<EvalRecord>& records) {
    std::size_t oos = 0;
    std::size_t caught = 0;
    for (const auto& r : records) {
        if (!r.gold.empty()) continue;
        ++oos;
        caught += r.predicted.empty();
    }
    if (oos == 0) throw InvalidArgument("oos_recall: no OOS records");
    return static_cast<double>(caught) / static_cast<double>(oos);
}

double inscope_accuracy(const std::vector<EvalRecord>& records, InScopeMatch match) {
    std::size_t n = 0;
    std::size_t hit = 0;
    for (const auto& r : records) {
        if (r.gold.empty()) continue;
        ++n;
        if (match == InScopeMatch::exact) {
            hit += r.predicted == r.gold;
        } else {
            hit += std::any_of(r.predicted.begin(), r.predicted.end(), [&](const IntentId& l) { return r.gold.count(l) > 0; });
        }
    }
    if (n == 0) throw InvalidArgument("inscope_accuracy: no in-scope records");
    return static_cast<double>(hit) / static_cast<double>(n);
}

double auc_roc(const std::vector<double>& pos, const std::vector<double>& neg) {
    if (pos.empty() || neg.empty()) throw InvalidArgument("auc_roc: both in-scope and OOS records are required");
    std::vector<std::pair<double, bool>> all;
    all.reserve(pos.size() + neg.size());
    for (double s : pos) all.emplace_back(s, true);
    for (double s : neg) all.emplace_back(s, false);
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    double wins = 0.0; // counted in halves to stay exact
    double neg_below = 0.0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        double p = 0, q = 0;
        while (j < all.size() && all[j].first == all[i].first) {
            (all[j].second ? p : q) += 1;
            ++j;
        }
        wins += 2 * p * neg_below + p * q;
        neg_below += q;
        i = j;
    }
    return wins / (2.0 * static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

double auc_roc(const std::vector<EvalRecord>& records) {
    std::vector<double> pos, neg;
    for (const auto& r : records) {
        if (!r.oos_score) throw InvalidArgument("auc_roc: record without oos_score");
        (r.gold.empty() ? neg : pos).push_back(*r.oos_score);
    }
    return auc_roc(pos, neg);
}

std::vector<EvalRecord> rethreshold(const std::vector<EvalRecord>& records, double tau) {
    std::vector<EvalRecord> out(records);
    for (auto& r : out) {
        r.predicted.clear();
        for (const auto& [label, score] : r.label_scores)
            if (score >= tau) r.predicted.insert(label);
    }
    return out;
}

SweepResult best_f1_sweep(const std::vector<EvalRecord>& records, const std::vector<IntentId>& labels,
                          const std::vector<double>& grid) {
    if (records.empty()) throw InvalidArgument("best_f1_sweep: no records");
    const std::size_t c = labels.size();
    std::vector<double> scores(records.size() * c, -std::numeric_limits<double>::infinity());
    std::vector<unsigned char> gold(records.size() * c, 0);
    std::set<double> candidates(grid.begin(), grid.end());
    bool has_oos = false;
    for (std::size_t r = 0; r < records.size(); ++r) {
        has_oos |= records[r].gold.empty();
        for (std::size_t k = 0; k < c; ++k) {
            if (auto it = records[r].label_scores.find(labels[k]); it != records[r].label_scores.end()) {
                scores[r * c + k] = it->second;
                candidates.insert(it->second);
            }
            gold[r * c + k] = records[r].gold.count(labels[k]) ? 1 : 0;
        }
    }
    const std::vector<double> thresholds(candidates.begin(), candidates.end());
    std::vector<kernels::PairCounts> counts(thresholds.size());
    kernels::threshold_counts(scores, gold, c, thresholds, counts);

    SweepResult best;
    best.f1 = -1.0;
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        const auto& pc = counts[i];
        const double denom = 2.0 * static_cast<double>(pc.tp) + static_cast<double>(pc.fp + pc.fn);
        const double f1 = denom == 0 ? 1.0 : 2.0 * static_cast<double>(pc.tp) / denom;
        if (f1 >= best.f1) { // ascending thresholds: ties go to the larger one
            best.f1 = f1;
            best.threshold = thresholds[i];
        }
    }
    best.oos_recall = has_oos ? oos_recall(rethreshold(records, best.threshold)) : std::nan("");
    return best;
}

LatencyStats latency_stats(std::vector<double> values) {
    LatencyStats s;
    s.count = values.size();
    if (values.empty()) return s;
    std::sort(values.begin(), values.end());
    s.p50 = values[(values.size() - 1) / 2];
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    return s;
}

double latency_fraction(double hybrid_mean, double llm_only_mean) {
    if (llm_only_mean == 0.0) throw InvalidArgument("latency_fraction: LLM-only mean latency is zero");
    return hybrid_mean / llm_only_mean;
}

double delta(double a, double b) {
    return a - b;
}

ReportRow summarize(const std::string& dataset, const std::string& system, const std::vector<EvalRecord>& records,
                    const ReportOptions& opts) {
    ReportRow row;
    row.dataset = dataset;
    row.system = system;
    row.records = records.size();
    row.f1 = f1_score(records, opts.f1_mode);

    bool any_oos = false, any_in = false, all_scored = !records.empty(), all_label_scores = !records.empty();
    std::set<IntentId> labels;
    std::size_t routed = 0;
    for (const auto& r : records) {
        any_oos |= r.gold.empty();
        any_in |= !r.gold.empty();
        all_scored &= r.oos_score.has_value();
        all_label_scores &= !r.label_scores.empty();
        for (const auto& [l, _] : r.label_scores) labels.insert(l);
        routed += r.routed_to_llm;
    }
    if (any_oos) row.oos_recall = oos_recall(records);
    if (any_in) row.inscope_accuracy = inscope_accuracy(records, opts.inscope_match);
    if (any_oos && any_in && all_scored) row.auc_roc = auc_roc(records);
    if (all_label_scores) row.best_threshold = best_f1_sweep(records, {labels.begin(), labels.end()}).threshold;
    row.llm_call_fraction = static_cast<double>(routed) / static_cast<double>(std::max<std::size_t>(1, records.size()));

    if (opts.include_timing) {
        std::vector<double> total, clf, llm;
        for (const auto& r : records) {
            total.push_back(r.latency.total_ms);
            clf.push_back(r.latency.classifier_ms);
            if (r.routed_to_llm) llm.push_back(r.latency.llm_ms);
        }
        row.total_latency = latency_stats(total);
        row.classifier_latency = latency_stats(clf);
        row.llm_latency = latency_stats(llm);
    }
    return row;
}

double Report::avg_score(const std::string& system, const std::optional<std::string>& exclude) const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
        if (r.system != system || (exclude && r.dataset == *exclude)) continue;
        sum += r.f1;
        ++n;
    }
    if (n == 0) throw InvalidArgument("avg_score: no rows for system '" + system + "'");
    return sum / static_cast<double>(n);
}

namespace {

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json latency_json(const std::optional<LatencyStats>& s) {
    if (!s) return nullptr;
    return {{"p50_ms", s->p50}, {"mean_ms", s->mean}, {"count", s->count}};
}

std::string csv_num(const std::optional<double>& v) {
    if (!v || std::isnan(*v)) return "";
    std::ostringstream ss;
    ss.precision(6);
    ss << std::fixed << *v;
    return ss.str();
}

} // namespace

std::string Report::to_json() const {
    nlohmann::ordered_json j;
    j["f1_mode"] = to_string(options.f1_mode);
    j["inscope_match"] = options.inscope_match == InScopeMatch::any ? "any" : "exact";
    j["rows"] = nlohmann::ordered_json::array();
    std::set<std::string> systems, datasets;
    for (const auto& r : rows) {
        systems.insert(r.system);
        datasets.insert(r.dataset);
        nlohmann::ordered_json row;
        row["dataset"] = r.dataset;
        row["system"] = r.system;
        row["records"] = r.records;
        row["f1"] = r.f1;
        row["oos_recall"] = opt_json(r.oos_recall);
        row["inscope_accuracy"] = opt_json(r.inscope_accuracy);
        row["auc_roc"] = opt_json(r.auc_roc);
        row["best_threshold"] = opt_json(r.best_threshold);
        row["llm_call_fraction"] = opt_json(r.llm_call_fraction);
        if (options.include_timing) {
            row["latency"] = {{"total", latency_json(r.total_latency)},
                              {"classifier", latency_json(r.classifier_latency)},
                              {"llm", latency_json(r.llm_latency)}};
        }
        j["rows"].push_back(std::move(row));
    }
    nlohmann::ordered_json avg = nlohmann::ordered_json::object();
    for (const auto& s : systems) {
        nlohmann::ordered_json entry;
        entry["avg_score"] = avg_score(s);
        if (datasets.size() > 1) {
            nlohmann::ordered_json without = nlohmann::ordered_json::object();
            for (const auto& d : datasets) without["w/o " + d] = avg_score(s, d);
            entry["avg_score_without"] = std::move(without);
        }
        avg[s] = std::move(entry);
    }
    j["averages"] = std::move(avg);
    return j.dump(2) + "\n";
}

std::string Report::to_csv() const {
    std::ostringstream out;
    out << "dataset,system,f1_mode,records,f1,oos_recall,inscope_accuracy,auc_roc,best_threshold,llm_call_fraction";
    if (options.include_timing) out << ",p50_total_ms,mean_total_ms,mean_classifier_ms,mean_llm_ms";
    out << "\n";
    for (const auto& r : rows) {
        out << r.dataset << ',' << r.system << ',' << to_string(options.f1_mode) << ',' << r.records << ','
            << csv_num(r.f1) << ',' << csv_num(r.oos_recall) << ',' << csv_num(r.inscope_accuracy) << ','
            << csv_num(r.auc_roc) << ',' << csv_num(r.best_threshold) << ',' << csv_num(r.llm_call_fraction);
        if (options.include_timing) {
            auto p = [](const std::optional<LatencyStats>& s, bool p50) -> std::optional<double> {
                if (!s || s->count == 0) return std::nullopt;
                return p50 ? s->p50 : s->mean;
            };
            out << ',' << csv_num(p(r.total_latency, true)) << ',' << csv_num(p(r.total_latency, false)) << ','
                << csv_num(p(r.classifier_latency, false)) << ',' << csv_num(p(r.llm_latency, false));
        }
        out << "\n";
    }
    return out.str();
}

} // namespace cascade
