#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cascade/augmentation.hpp"
#include "cascade/classifier.hpp"
#include "cascade/domain.hpp"
#include "cascade/evaluation.hpp"
#include "cascade/llm.hpp"
#include "cascade/mock_llm.hpp"
#include "cascade/oos_twostep.hpp"
#include "cascade/prompting.hpp"
#include "cascade/router.hpp"

namespace cascade::app {

struct EmbeddingSpec {
    std::string kind = "hashing"; // hashing | remote
    std::size_t dim = 256;
    HttpEndpoint endpoint{.url = "http://127.0.0.1:8001", .path = "/v1/embed"};
};

struct LlmSpec {
    std::string kind = "mock"; // mock | http
    HttpLlmConfig http;
    MockLlmConfig mock;
};

struct ReprSpec {
    std::string kind = "embedder"; // embedder | http
    std::size_t dim = 256;
    HttpEndpoint endpoint{.url = "http://127.0.0.1:8002", .path = "/v1/repr"};
};

struct RunConfig {
    std::filesystem::path intents_file;
    std::filesystem::path utterances_file;
    std::filesystem::path work_dir = "run";
    std::optional<std::filesystem::path> templates_dir;
    std::uint64_t seed = 0; // master seed; module seeds are derived from it

    EmbeddingSpec embedding;
    AugmentationConfig augmentation;
    TrainConfig train;
    McConfig mc;
    RetrievalConfig retrieval;
    UnstableAction unstable_action = UnstableAction::route_to_llm;
    bool fallback_to_classifier = true;
    bool batched_mc = false;
    ParseFailurePolicy parse_policy = ParseFailurePolicy::treat_as_oos;
    LlmSpec llm;
    ReprSpec repr;
    TwoStepConfig two_step;
    std::optional<double> max_inscope_drop;
    ReportOptions report;

    RouterPolicy router_policy() const;
};

// Parses a JSON config. Unknown keys and ill-typed values are all collected
// and reported in one FormatError. Relative paths resolve against the config
// file's directory. CASCADE_LLM_URL, CASCADE_LLM_TOKEN, CASCADE_EMBED_URL and
// CASCADE_REPR_URL override the matching endpoint settings.
RunConfig load_config(const std::filesystem::path& file);
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
nlohmann::ordered_json config_to_json(const RunConfig& cfg);

// Seeds of every stochastic stage, derived from cfg.seed:
//   augment, train, mc, mask, llm; the label-space lab derives "lab" itself.
void apply_seed_tree(RunConfig& cfg);
std::uint64_t mask_seed(const RunConfig& cfg);

Dataset load_config_dataset(const RunConfig& cfg);
std::shared_ptr<const EmbeddingProvider> make_embedder(const RunConfig& cfg);
std::shared_ptr<const RepresentationProvider> make_repr_provider(const RunConfig& cfg);
PromptTemplates load_templates(const RunConfig& cfg);

// Work-directory layout.
struct Artifacts {
    std::filesystem::path dir;
    std::filesystem::path augmented() const { return dir / "augmented.jsonl"; }
    std::filesystem::path head() const { return dir / "model"; }
    std::filesystem::path store() const { return dir / "store"; }
    std::filesystem::path mask() const { return dir / "mask.json"; }
    std::filesystem::path descriptions() const { return dir / "descriptions.json"; }
    std::filesystem::path bank() const { return dir / "bank"; }
    std::filesystem::path requests() const { return dir / "requests.jsonl"; }
};

void save_mask(const LabelMask& mask, const std::filesystem::path& file);
LabelMask load_mask(const std::filesystem::path& file);

std::vector<LabeledUtterance> run_augment(const RunConfig& cfg);

struct TrainSummary {
    std::size_t examples = 0;
    std::size_t augmented = 0;
    std::vector<double> epoch_loss;
};
// Trains the head on train + augmented negatives, builds the vector store and
// the label mask, and writes all three to the work directory.
TrainSummary run_train(const RunConfig& cfg);

// Everything the online paths need, loaded from the work directory.
struct Bundle {
    Dataset dataset;
    std::shared_ptr<const EmbeddingProvider> embedder;
    std::shared_ptr<const HeadModel> head;
    std::shared_ptr<const VectorStore> store;
    LabelMask mask;
    std::map<IntentId, std::string> descriptions;
    std::shared_ptr<const LlmClient> llm;
    PromptTemplates templates;
};
Bundle load_bundle(const RunConfig& cfg);
Router make_router(const Bundle& b, const RunConfig& cfg);

std::size_t run_descriptions(const RunConfig& cfg);

enum class System { classifier, llm, hybrid, two_step };
std::string_view to_string(System s);
System system_from_string(std::string_view s);

// Scores the validation split with one system. For two_step, theta comes from
// cfg.two_step.theta unless `calibrate` is set, in which case it is
// calibrated on the same split.
std::vector<EvalRecord> evaluate_records(const RunConfig& cfg, System system, bool calibrate = false,
                                         double* theta_out = nullptr);
Report run_evaluate(const RunConfig& cfg, const std::vector<System>& systems, bool calibrate = false);

nlohmann::ordered_json prediction_json(const RoutedPrediction& p, bool include_timing = true);
std::vector<RoutedPrediction> run_route(const RunConfig& cfg, const std::vector<std::string>& queries);

RepresentationBank run_build_bank(const RunConfig& cfg);

std::string run_labspace(const RunConfig& cfg, const std::string& system, const std::filesystem::path& leaves_file,
                         int repeats, const std::vector<int>& scopes, const std::vector<int>& labels);

// HTTP prediction service:
//   POST /v1/predict    {"query": str} -> prediction_json
//   GET  /healthz       {"status": "ok", ...}
//   POST /admin/reload  reloads the bundle from the work directory
// Requests are served concurrently against one immutable bundle; a reload
// swaps the bundle atomically.
class Server {
public:
    explicit Server(RunConfig cfg);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    // Binds (port 0 picks a free port) and returns the bound port.
    int bind(const std::string& host, int port);
    void run(); // blocks until stop()
    void stop();

    // Handlers, usable without a socket.
    std::pair<int, std::string> predict(const std::string& body) const;
    std::string health() const;
    void reload();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace cascade::app
