#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "es/routing.hpp"

namespace es {

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // row-major

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c) {}
    double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
};

struct ModelConfig {
    int vocab_size = 256;
    int hidden_dim = 64;
    int num_layers = 4;
    int num_experts = 128;
    int top_k = 8;
    int expert_hidden_dim = 32;
    uint64_t seed = 42;

    // Table-derived routing shapes at desk scale:
    //   qwen3-30b-mini      128 experts / top-8
    //   gpt-oss-20b-mini     32 experts / top-4
    //   ling-lite-mini       64 experts / top-6
    //   qwen3-next-80b-mini 256 experts / top-10
    static ModelConfig preset(const std::string& name);
    static std::vector<std::string> preset_names();

    void validate() const;
};

struct ExpertParams {
    Matrix w_in;   // expert_hidden x hidden
    Matrix w_out;  // hidden x expert_hidden
};

struct LayerParams {
    Matrix w_gate;  // hidden x num_experts
    std::vector<ExpertParams> experts;
};

// Seeded residual MoE-FFN stack: embedding -> L x (rmsnorm, route, experts,
// combine, residual) -> rmsnorm -> output head. No attention; every token
// position is processed independently.
struct Model {
    ModelConfig config;
    Matrix embedding;  // vocab x hidden
    std::vector<LayerParams> layers;
    Matrix out_head;  // hidden x vocab

    uint64_t param_checksum() const;
};

// Deterministic parameters from config.seed: a single splitmix64 stream fills
// uniform [-s, s] entries with s = 1/sqrt(fan_in), in the documented order
// embedding, then per layer (w_gate, experts 0..n-1 as w_in then w_out), then
// the output head.
Model build_model(const ModelConfig& config);

// Flat binary checkpoint: magic "ESMODEL1", then the seven config fields as
// little-endian u64 in declaration order, then all parameters as f64 in build
// order.
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

enum class Phase { Prefill, Decode };

struct TraceEntry {
    int layer = 0;
    int position = 0;
    Phase phase = Phase::Prefill;
    RouterDistribution dist;
    ExpertSelection selection;
};

struct RouteTrace {
    std::vector<TraceEntry> entries;
};

struct ForwardResult {
    Matrix logits;  // tokens x vocab
    uint64_t rng_draws = 0;
};

// Per-position forward pass over the stack. Greedy routing consumes no
// randomness; ExpertSample consumes one u64 from rng to seed per-(layer,
// position) substreams, so results are identical for any thread count.
ForwardResult forward(const Model& model, std::span<const int> tokens, const SamplerSpec& spec,
                      Rng& rng, RouteTrace* trace = nullptr);

// Serial reference of the same kernel, kept for testing; bit-identical to
// forward().
ForwardResult forward_serial(const Model& model, std::span<const int> tokens,
                             const SamplerSpec& spec, Rng& rng, RouteTrace* trace = nullptr);

// Token-level sampling configuration. Truncation order is pinned as
// temperature -> top-k -> top-p -> renormalize -> draw; temperature 0 is
// argmax.
struct GenConfig {
    int max_new_tokens = 16;
    double token_temperature = 0.7;
    double top_p = 0.8;
    std::optional<int> top_k_tokens = 20;

    static GenConfig greedy(int max_new_tokens);
    static GenConfig normal(int max_new_tokens);  // T=0.7, top-p=0.8, top-k=20
    static GenConfig high(int max_new_tokens);    // T=1.3, top-p=0.98, no top-k
    static GenConfig preset(const std::string& name, int max_new_tokens);

    void validate() const;
};

// Kept-token indices and renormalized probabilities after top-k then top-p
// truncation, in descending probability order. Exposed for direct testing of
// the truncation rules.
std::vector<std::pair<int, double>> truncate_token_probs(std::span<const double> probs,
                                                         std::optional<int> top_k, double top_p);

// One token draw from next-token logits under gen. Consumes randomness only
// when token_temperature > 0.
int sample_token(std::span<const double> logits, const GenConfig& gen, Rng& token_rng);

struct GenerateResult {
    std::vector<int> tokens;  // generated continuation, prompt excluded
    RouteTrace trace;         // prefill + decode entries when recorded
    uint64_t rng_draws = 0;
};

// Autoregressive decoding. Routing noise and token noise come from
// independent substreams of rng; fixed (model, prompt, gen, spec, seed) give
// an identical continuation for any thread count.
GenerateResult generate(const Model& model, std::span<const int> prompt, const GenConfig& gen,
                        const SamplerSpec& spec, Rng& rng, bool record_trace = true);

}  // namespace es
