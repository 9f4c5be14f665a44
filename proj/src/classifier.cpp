#include "cascade/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "cascade/kernels.hpp"

namespace cascade {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

namespace {

// log(1 + e^z) without overflow.
double softplus(double z) {
    return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

} // namespace

HeadModel HeadModel::zeros(std::size_t dim, std::vector<IntentId> labels, double threshold) {
    HeadModel h;
    h.dim = dim;
    h.label_order = std::move(labels);
    h.weights.assign(h.classes() * dim, 0.0);
    h.bias.assign(h.classes(), 0.0);
    h.threshold = threshold;
    return h;
}

void HeadModel::save(const std::filesystem::path& prefix) const {
    const std::string base = prefix.string();
    nlohmann::ordered_json j;
    j["dim"] = dim;
    j["threshold"] = threshold;
    j["label_order"] = label_order;
    j["weights_file"] = std::filesystem::path(base + ".head.bin").filename().string();
    j["layout"] = "float64-le; weights C x dim row-major, then bias C";
    write_file(base + ".head.json", j.dump(2) + "\n");
    std::vector<double> flat(weights);
    flat.insert(flat.end(), bias.begin(), bias.end());
    write_f64_file(base + ".head.bin", flat);
}

HeadModel HeadModel::load(const std::filesystem::path& prefix) {
    const std::string base = prefix.string();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(base + ".head.json"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(base + ".head.json: " + e.what());
    }
    HeadModel h;
    h.dim = j.at("dim").get<std::size_t>();
    h.threshold = j.at("threshold").get<double>();
    h.label_order = j.at("label_order").get<std::vector<IntentId>>();
    auto flat = read_f64_file(base + ".head.bin");
    const std::size_t c = h.classes();
    if (flat.size() != c * h.dim + c) throw FormatError(base + ".head.bin: unexpected size");
    h.weights.assign(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(c * h.dim));
    h.bias.assign(flat.begin() + static_cast<std::ptrdiff_t>(c * h.dim), flat.end());
    return h;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be > 0");
    if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
    if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
    if (!(l2 >= 0.0)) throw InvalidArgument("l2 must be >= 0");
    if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("threshold must be in (0, 1)");
}

void McConfig::validate() const {
    if (samples < 1) throw InvalidArgument("MC samples must be >= 1");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw InvalidArgument("dropout_p must be in [0, 1)");
}

TrainingSet make_training_set(const EmbeddingProvider& provider, const Dataset& dataset,
                              const std::vector<LabeledUtterance>& extra_oos) {
    TrainingSet ts;
    ts.dim = provider.dim();
    ts.labels = dataset.intent_ids();
    std::vector<std::string> texts;
    std::vector<const LabelSet*> gold;
    for (const auto& u : dataset.train) {
        texts.push_back(u.text);
        gold.push_back(&u.gold_labels);
    }
    for (const auto& u : extra_oos) {
        texts.push_back(u.text);
        gold.push_back(&u.gold_labels);
    }
    const auto vectors = provider.embed_batch(texts);
    const std::size_t c = ts.labels.size();
    ts.inputs.reserve(vectors.size() * ts.dim);
    ts.targets.assign(vectors.size() * c, 0);
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        ts.inputs.insert(ts.inputs.end(), vectors[i].values().begin(), vectors[i].values().end());
        for (std::size_t k = 0; k < c; ++k) ts.targets[i * c + k] = gold[i]->count(ts.labels[k]) ? 1 : 0;
    }
    return ts;
}

LossAndGradient loss_and_gradient(const HeadModel& head, std::span<const double> inputs,
                                  std::span<const unsigned char> targets, double l2) {
    const std::size_t dim = head.dim;
    const std::size_t c = head.classes();
    const std::size_t n = inputs.size() / dim;
    if (targets.size() != n * c) throw InvalidArgument("loss_and_gradient: target shape mismatch");

    std::vector<double> logits(n * c);
    kernels::affine(inputs, head.weights, head.bias, dim, logits);

    LossAndGradient out;
    out.grad_weights.assign(c * dim, 0.0);
    out.grad_bias.assign(c, 0.0);
    const double scale = 1.0 / static_cast<double>(n * c);
    double data_loss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t k = 0; k < c; ++k) {
            const double z = logits[r * c + k];
            const double y = targets[r * c + k];
            data_loss += softplus(z) - y * z;
            const double g = (sigmoid(z) - y) * scale;
            out.grad_bias[k] += g;
            double* gw = out.grad_weights.data() + k * dim;
            const double* x = inputs.data() + r * dim;
            for (std::size_t i = 0; i < dim; ++i) gw[i] += g * x[i];
        }
    }
    double wsq = 0.0;
    for (std::size_t i = 0; i < head.weights.size(); ++i) {
        wsq += head.weights[i] * head.weights[i];
        out.grad_weights[i] += l2 * head.weights[i];
    }
    out.loss = data_loss * scale + 0.5 * l2 * wsq;
    return out;
}

HeadModel train_head(const TrainingSet& data, const TrainConfig& cfg, TrainReport* report) {
    cfg.validate();
    const std::size_t n = data.size();
    const std::size_t dim = data.dim;
    const std::size_t c = data.labels.size();
    if (n == 0) throw InvalidArgument("train_head: no training examples");
    if (c == 0) throw InvalidArgument("train_head: no labels");

    HeadModel head = HeadModel::zeros(dim, data.labels, cfg.threshold);
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> batch_x;
    std::vector<unsigned char> batch_y;
    const auto bs = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle(order, rng);
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t end = std::min(n, start + bs);
            batch_x.clear();
            batch_y.clear();
            for (std::size_t i = start; i < end; ++i) {
                const std::size_t r = order[i];
                batch_x.insert(batch_x.end(), data.inputs.begin() + static_cast<std::ptrdiff_t>(r * dim),
                               data.inputs.begin() + static_cast<std::ptrdiff_t>((r + 1) * dim));
                batch_y.insert(batch_y.end(), data.targets.begin() + static_cast<std::ptrdiff_t>(r * c),
                               data.targets.begin() + static_cast<std::ptrdiff_t>((r + 1) * c));
            }
            const auto lg = loss_and_gradient(head, batch_x, batch_y, cfg.l2);
            if (!std::isfinite(lg.loss)) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch + 1 << ", batch starting at example " << start
                    << " (learning_rate=" << cfg.learning_rate << ", l2=" << cfg.l2 << ")";
                throw TrainingError(msg.str());
            }
            for (std::size_t i = 0; i < head.weights.size(); ++i) head.weights[i] -= cfg.learning_rate * lg.grad_weights[i];
            for (std::size_t k = 0; k < c; ++k) head.bias[k] -= cfg.learning_rate * lg.grad_bias[k];
        }
        const double full = loss_and_gradient(head, data.inputs, data.targets, cfg.l2).loss;
        if (!std::isfinite(full)) throw TrainingError("non-finite loss after epoch " + std::to_string(epoch + 1));
        if (report) report->epoch_loss.push_back(full);
    }
    return head;
}

Prediction predict(const HeadModel& head, const EmbeddingVector& v) {
    if (v.dim() != head.dim)
        throw DimensionMismatch("predict: vector dim " + std::to_string(v.dim()) + ", head dim " + std::to_string(head.dim));
    Prediction p;
    p.scores.resize(head.classes());
    kernels::affine(v.values(), head.weights, head.bias, head.dim, p.scores);
    for (std::size_t k = 0; k < head.classes(); ++k) {
        p.scores[k] = sigmoid(p.scores[k]);
        if (p.scores[k] >= head.threshold) p.labels.insert(head.label_order[k]);
    }
    return p;
}

std::vector<Prediction> predict_batch(const HeadModel& head, std::span<const EmbeddingVector> vs) {
    const std::size_t c = head.classes();
    std::vector<double> inputs;
    inputs.reserve(vs.size() * head.dim);
    for (const auto& v : vs) {
        if (v.dim() != head.dim) throw DimensionMismatch("predict_batch: vector dim differs from head dim");
        inputs.insert(inputs.end(), v.values().begin(), v.values().end());
    }
    std::vector<double> logits(vs.size() * c);
    kernels::affine(inputs, head.weights, head.bias, head.dim, logits);
    std::vector<Prediction> out(vs.size());
    for (std::size_t r = 0; r < vs.size(); ++r) {
        out[r].scores.resize(c);
        for (std::size_t k = 0; k < c; ++k) {
            out[r].scores[k] = sigmoid(logits[r * c + k]);
            if (out[r].scores[k] >= head.threshold) out[r].labels.insert(head.label_order[k]);
        }
    }
    return out;
}

FeatureDropoutPredictor::FeatureDropoutPredictor(const HeadModel& head, double dropout_p)
    : head_(head), dropout_p_(dropout_p) {
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw InvalidArgument("dropout_p must be in [0, 1)");
}

std::vector<double> FeatureDropoutPredictor::sample_logits(const EmbeddingVector& v, Rng& rng) const {
    if (v.dim() != head_.dim) throw DimensionMismatch("mc sample: vector dim differs from head dim");
    std::vector<double> x(v.values().begin(), v.values().end());
    if (dropout_p_ > 0.0) {
        const double keep_scale = 1.0 / (1.0 - dropout_p_);
        for (double& xi : x) xi = bernoulli(rng, dropout_p_) ? 0.0 : xi * keep_scale;
    }
    std::vector<double> logits(head_.classes());
    kernels::serial::affine(x, head_.weights, head_.bias, head_.dim, logits);
    return logits;
}

McResult mc_run(const StochasticPredictor& predictor, const EmbeddingVector& v, int samples, Rng& rng) {
    if (samples < 1) throw InvalidArgument("MC samples must be >= 1");
    McResult r;
    r.argmax.reserve(static_cast<std::size_t>(samples));
    r.sample_scores.reserve(static_cast<std::size_t>(samples));
    for (int i = 0; i < samples; ++i) {
        auto logits = predictor.sample_logits(v, rng);
        r.argmax.push_back(argmax(logits));
        for (double& z : logits) z = sigmoid(z);
        r.sample_scores.push_back(std::move(logits));
    }
    return r;
}

McResult mc_run_batched(const FeatureDropoutPredictor& predictor, const EmbeddingVector& v, int samples, Rng& rng) {
    if (samples < 1) throw InvalidArgument("MC samples must be >= 1");
    const auto& head = predictor.head();
    if (v.dim() != head.dim) throw DimensionMismatch("mc sample: vector dim differs from head dim");
    const double p = predictor.dropout_p();
    const double keep_scale = 1.0 / (1.0 - p);
    const std::size_t m = static_cast<std::size_t>(samples);
    std::vector<double> inputs(m * head.dim);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < head.dim; ++j) {
            const double xi = v[j];
            inputs[i * head.dim + j] = p > 0.0 ? (bernoulli(rng, p) ? 0.0 : xi * keep_scale) : xi;
        }
    }
    std::vector<double> logits(m * head.classes());
    kernels::affine(inputs, head.weights, head.bias, head.dim, logits);

    McResult r;
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<double> row(logits.begin() + static_cast<std::ptrdiff_t>(i * head.classes()),
                                logits.begin() + static_cast<std::ptrdiff_t>((i + 1) * head.classes()));
        r.argmax.push_back(argmax(row));
        for (double& z : row) z = sigmoid(z);
        r.sample_scores.push_back(std::move(row));
    }
    return r;
}

std::vector<IntentId> mc_sample(const HeadModel& head, const EmbeddingVector& v, const McConfig& mc) {
    mc.validate();
    FeatureDropoutPredictor predictor(head, mc.dropout_p);
    Rng rng(mc.seed);
    const auto r = mc_run(predictor, v, mc.samples, rng);
    std::vector<IntentId> out;
    out.reserve(r.argmax.size());
    for (auto idx : r.argmax) out.push_back(head.label_order[idx]);
    return out;
}

UncertaintyVerdict uncertainty_from_count(std::size_t distinct_count, int samples) {
    if (samples < 1) throw InvalidArgument("uncertainty: M must be >= 1");
    if (distinct_count < 1 || distinct_count > static_cast<std::size_t>(samples))
        throw InvalidArgument("uncertainty: distinct count must be in [1, M]");
    const auto cap = static_cast<std::size_t>((samples + 1) / 2); // ceil(M / 2)
    UncertaintyVerdict v;
    v.distinct_count = distinct_count;
    if (distinct_count == 1) v.verdict = Uncertainty::certain;
    else if (distinct_count <= cap) v.verdict = Uncertainty::uncertain;
    else v.verdict = Uncertainty::unstable;
    return v;
}

void score_moments(const McResult& r, std::vector<double>& mean, std::vector<double>& variance) {
    const std::size_t m = r.sample_scores.size();
    const std::size_t c = m == 0 ? 0 : r.sample_scores.front().size();
    mean.assign(c, 0.0);
    variance.assign(c, 0.0);
    if (m == 0) return;
    for (const auto& s : r.sample_scores)
        for (std::size_t k = 0; k < c; ++k) mean[k] += s[k];
    for (double& x : mean) x /= static_cast<double>(m);
    for (const auto& s : r.sample_scores)
        for (std::size_t k = 0; k < c; ++k) variance[k] += (s[k] - mean[k]) * (s[k] - mean[k]);
    for (double& x : variance) x /= static_cast<double>(m);
}

} // namespace cascade
