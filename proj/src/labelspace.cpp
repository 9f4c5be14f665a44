#include "cascade/labelspace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cascade/augmentation.hpp"
#include "cascade/error.hpp"
#include "cascade/text.hpp"

namespace cascade::lab {

std::vector<std::string> leaf_violations(const std::vector<LeafIntent>& leaves) {
    std::vector<std::string> v;
    if (leaves.size() != kParents * kLeavesPerParent)
        v.push_back("expected " + std::to_string(kParents * kLeavesPerParent) + " leaves, found " +
                    std::to_string(leaves.size()));
    std::map<std::string, std::size_t> per_parent;
    std::set<std::string> names, texts;
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        const auto& l = leaves[i];
        const std::string where = "leaves[" + std::to_string(i) + "]";
        ++per_parent[l.parent];
        if (!names.insert(l.name).second) v.push_back(where + ": duplicate name '" + l.name + "'");
        if (l.utterances.size() != kUtterancesPerLeaf)
            v.push_back(where + ": expected " + std::to_string(kUtterancesPerLeaf) + " utterances, found " +
                        std::to_string(l.utterances.size()));
        for (std::size_t j = 0; j < l.utterances.size(); ++j) {
            const auto& u = l.utterances[j];
            if (u.paraphrases.size() != kParaphrasesPerUtterance)
                v.push_back(where + ".utterances[" + std::to_string(j) + "]: expected " +
                            std::to_string(kParaphrasesPerUtterance) + " paraphrases");
            if (!texts.insert(u.text).second) v.push_back(where + ": duplicate text '" + u.text + "'");
            for (const auto& p : u.paraphrases)
                if (!texts.insert(p).second) v.push_back(where + ": duplicate text '" + p + "'");
        }
    }
    if (per_parent.size() != kParents)
        v.push_back("expected " + std::to_string(kParents) + " parents, found " + std::to_string(per_parent.size()));
    for (const auto& [parent, n] : per_parent)
        if (n != kLeavesPerParent)
            v.push_back("parent '" + parent + "' has " + std::to_string(n) + " leaves, expected " +
                        std::to_string(kLeavesPerParent));
    return v;
}

std::vector<LeafIntent> load_leaves(const std::filesystem::path& file) {
    std::vector<LeafIntent> leaves;
    std::istringstream in(read_file(file));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            LeafIntent l;
            l.parent = j.at("parent").get<std::string>();
            l.name = j.at("name").get<std::string>();
            for (const auto& u : j.at("utterances"))
                l.utterances.push_back({u.at("text").get<std::string>(),
                                        u.at("paraphrases").get<std::vector<std::string>>(),
                                        u.value("source", "fixture")});
            leaves.push_back(std::move(l));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (auto v = leaf_violations(leaves); !v.empty()) {
        std::string msg = file.string() + ": invalid leaf fixture";
        for (const auto& s : v) msg += "\n  " + s;
        throw FormatError(msg);
    }
    return leaves;
}

std::string ScopedIntent::id(const std::vector<LeafIntent>& all) const {
    std::string out;
    for (auto i : leaves) out += (out.empty() ? "" : "+") + all[i].name;
    return out;
}

std::size_t max_labels(int scope) {
    if (scope < 1) return 0;
    return kParents * (kLeavesPerParent / static_cast<std::size_t>(scope));
}

bool feasible(int scope, int labels) {
    return scope >= 1 && scope <= 5 && labels >= 1 && static_cast<std::size_t>(labels) <= max_labels(scope);
}

std::vector<ScopedIntent> compose_intents(const std::vector<LeafIntent>& leaves, int scope, Rng& rng) {
    if (scope < 1 || scope > 5) throw InvalidArgument("scope S must be in [1, 5]");
    std::vector<std::string> parents;
    for (const auto& l : leaves)
        if (std::find(parents.begin(), parents.end(), l.parent) == parents.end()) parents.push_back(l.parent);

    std::vector<ScopedIntent> out;
    for (const auto& parent : parents) {
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < leaves.size(); ++i)
            if (leaves[i].parent == parent) pool.push_back(i);
        shuffle(pool, rng);
        const std::size_t s = static_cast<std::size_t>(scope);
        for (std::size_t g = 0; g + s <= pool.size(); g += s) {
            ScopedIntent si;
            si.parent = parent;
            si.leaves.assign(pool.begin() + static_cast<std::ptrdiff_t>(g),
                             pool.begin() + static_cast<std::ptrdiff_t>(g + s));
            std::sort(si.leaves.begin(), si.leaves.end());
            out.push_back(std::move(si));
        }
    }
    return out;
}

Experiment make_experiment(const std::vector<LeafIntent>& leaves, int scope, int labels, std::uint64_t seed) {
    if (!feasible(scope, labels))
        throw InfeasibleExperiment("(S=" + std::to_string(scope) + ", L=" + std::to_string(labels) +
                                   ") is infeasible: at most " + std::to_string(max_labels(scope)) +
                                   " disjoint intents of scope " + std::to_string(scope));
    Rng rng(seed);
    auto all = compose_intents(leaves, scope, rng);
    shuffle(all, rng);
    Experiment e;
    e.scope = scope;
    e.labels = labels;
    e.chosen.assign(all.begin(), all.begin() + labels);

    // Split every leaf, covered or not, into train and test halves.
    std::vector<std::vector<std::size_t>> order(leaves.size());
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        order[i].resize(leaves[i].utterances.size());
        for (std::size_t j = 0; j < order[i].size(); ++j) order[i][j] = j;
        shuffle(order[i], rng);
    }
    auto add_test = [&](std::size_t leaf, const LabelSet& gold, std::vector<LabeledUtterance>& into) {
        for (std::size_t j = kTrainPerLeaf; j < order[leaf].size(); ++j) {
            const auto& u = leaves[leaf].utterances[order[leaf][j]];
            into.push_back({u.text, gold, Origin::human});
            for (const auto& p : u.paraphrases) into.push_back({p, gold, Origin::paraphrase});
        }
    };

    std::set<std::size_t> covered;
    for (const auto& si : e.chosen) {
        const auto id = si.id(leaves);
        e.dataset.intents.push_back({id, id, std::nullopt});
        for (auto leaf : si.leaves) {
            covered.insert(leaf);
            for (std::size_t j = 0; j < kTrainPerLeaf; ++j)
                e.dataset.train.push_back({leaves[leaf].utterances[order[leaf][j]].text, {id}, Origin::human});
            add_test(leaf, {id}, e.dataset.valid_in_scope);
        }
    }
    for (std::size_t leaf = 0; leaf < leaves.size(); ++leaf)
        if (!covered.count(leaf)) add_test(leaf, {}, e.dataset.valid_oos);
    return e;
}

namespace {

std::vector<const LabeledUtterance*> test_set(const Dataset& d) {
    std::vector<const LabeledUtterance*> out;
    for (const auto& u : d.valid_in_scope) out.push_back(&u);
    for (const auto& u : d.valid_oos) out.push_back(&u);
    return out;
}

} // namespace

std::vector<EvalRecord> OracleSystem::run(const Experiment& e, std::uint64_t) const {
    std::vector<EvalRecord> out;
    for (const auto* u : test_set(e.dataset)) {
        EvalRecord r;
        r.gold = u->gold_labels;
        r.predicted = u->gold_labels;
        r.oos_score = r.predicted.empty() ? 0.0 : 1.0;
        out.push_back(std::move(r));
    }
    return out;
}

ClassifierSystem::ClassifierSystem(std::shared_ptr<const EmbeddingProvider> embedder)
    : embedder_(std::move(embedder)) {}

std::vector<EvalRecord> ClassifierSystem::run(const Experiment& e, std::uint64_t seed) const {
    AugmentationConfig aug;
    aug.seed = derive_seed(seed, "augment");
    const auto negatives = augment_dataset(e.dataset.train, aug, *embedder_);
    TrainConfig tc;
    tc.batch_size = 16;
    tc.epochs = 5;
    tc.seed = derive_seed(seed, "train");
    const auto head = train_head(make_training_set(*embedder_, e.dataset, negatives), tc);

    const auto tests = test_set(e.dataset);
    std::vector<std::string> texts;
    for (const auto* u : tests) texts.push_back(u->text);
    const auto vecs = embedder_->embed_batch(texts);
    const auto preds = predict_batch(head, vecs);

    std::vector<EvalRecord> out;
    for (std::size_t i = 0; i < tests.size(); ++i) {
        EvalRecord r;
        r.gold = tests[i]->gold_labels;
        r.predicted = preds[i].labels;
        r.oos_score = *std::max_element(preds[i].scores.begin(), preds[i].scores.end());
        for (std::size_t c = 0; c < head.classes(); ++c) r.label_scores[head.label_order[c]] = preds[i].scores[c];
        out.push_back(std::move(r));
    }
    return out;
}

LlmSystem::LlmSystem(std::string name, std::shared_ptr<const EmbeddingProvider> embedder, Factory make_llm)
    : name_(std::move(name)), embedder_(std::move(embedder)), make_llm_(std::move(make_llm)) {}

std::vector<EvalRecord> LlmSystem::run(const Experiment& e, std::uint64_t seed) const {
    const auto mask = mask_labels(e.dataset.intent_ids(), derive_seed(seed, "mask"));
    const auto llm = make_llm_(e, mask);
    const auto store = build_store(*embedder_, e.dataset);
    const RetrievalConfig retrieval{5, 1e-5};
    const auto templates = PromptTemplates::defaults();

    std::vector<EvalRecord> out;
    for (const auto* u : test_set(e.dataset)) {
        const auto retrieved = retrieve_icl(embedder_->embed(u->text), store, retrieval);
        const auto bundle = build_prompt(u->text, retrieved, mask, {}, PromptMode::with_oos, templates);
        ChatRequest req;
        req.prompt = bundle.render(templates);
        EvalRecord r;
        r.gold = u->gold_labels;
        r.predicted = resolve_answer(parse_response(llm->chat(req).text, mask), ParseFailurePolicy::treat_as_oos);
        r.oos_score = r.predicted.empty() ? 0.0 : 1.0;
        r.routed_to_llm = true;
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<CellResult> run_grid(const std::vector<LeafIntent>& leaves, const LabSystem& system,
                                 const GridConfig& cfg) {
    if (cfg.repeats < 1) throw InvalidArgument("labspace: repeats must be >= 1");
    std::vector<CellResult> cells;
    for (int s : cfg.scopes)
        for (int l : cfg.labels) {
            CellResult c;
            c.scope = s;
            c.labels = l;
            c.truncated = !feasible(s, l);
            c.repeats = c.truncated ? 0 : cfg.repeats;
            cells.push_back(c);
        }

    struct Task {
        std::size_t cell;
        int repeat;
    };
    std::vector<Task> tasks;
    for (std::size_t i = 0; i < cells.size(); ++i)
        if (!cells[i].truncated)
            for (int r = 0; r < cfg.repeats; ++r) tasks.push_back({i, r});

    struct Metrics {
        double auc = 0, acc = 0, recall = 0;
    };
    std::vector<Metrics> results(tasks.size());
    const std::uint64_t lab_seed = derive_seed(cfg.seed, "lab");
    std::exception_ptr error;
    const auto n = static_cast<std::ptrdiff_t>(tasks.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t t = 0; t < n; ++t) {
        try {
            const auto& task = tasks[static_cast<std::size_t>(t)];
            const auto& cell = cells[task.cell];
            const std::uint64_t cell_seed =
                derive_seed(lab_seed, "S" + std::to_string(cell.scope) + "L" + std::to_string(cell.labels));
            const std::uint64_t seed = derive_seed(cell_seed, static_cast<std::uint64_t>(task.repeat));
            const auto e = make_experiment(leaves, cell.scope, cell.labels, derive_seed(seed, "experiment"));
            const auto records = system.run(e, derive_seed(seed, "system"));
            auto& m = results[static_cast<std::size_t>(t)];
            m.acc = inscope_accuracy(records);
            if (e.dataset.valid_oos.empty()) {
                m.auc = m.recall = std::nan(""); // every leaf covered: no OOS pool
            } else {
                m.auc = auc_roc(records);
                m.recall = oos_recall(records);
            }
        } catch (...) {
#pragma omp critical(cascade_lab_error)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);

    // Sum in task order so the means do not depend on thread scheduling.
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        auto& c = cells[tasks[t].cell];
        c.auc_roc += results[t].auc;
        c.inscope_accuracy += results[t].acc;
        c.oos_recall += results[t].recall;
    }
    for (auto& c : cells) {
        if (c.truncated) continue;
        c.auc_roc /= c.repeats;
        c.inscope_accuracy /= c.repeats;
        c.oos_recall /= c.repeats;
    }
    return cells;
}

std::string grid_csv(const std::string& system, const std::vector<CellResult>& cells) {
    std::string out = "system,scope,labels,status,repeats,auc_roc,inscope_accuracy,oos_recall\n";
    char buf[256];
    for (const auto& c : cells) {
        if (c.truncated) {
            std::snprintf(buf, sizeof buf, "%s,%d,%d,truncated,0,,,\n", system.c_str(), c.scope, c.labels);
        } else {
            auto fmt = [](double v) {
                char b[32] = "";
                if (!std::isnan(v)) std::snprintf(b, sizeof b, "%.6f", v);
                return std::string(b);
            };
            std::snprintf(buf, sizeof buf, "%s,%d,%d,ok,%d,%s,%s,%s\n", system.c_str(), c.scope, c.labels, c.repeats,
                          fmt(c.auc_roc).c_str(), fmt(c.inscope_accuracy).c_str(), fmt(c.oos_recall).c_str());
        }
        out += buf;
    }
    return out;
}

} // namespace cascade::lab
