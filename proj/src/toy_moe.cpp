#include "es/toy_moe.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "es/errors.hpp"
#include "es/numeric.hpp"

namespace es {

ModelConfig ModelConfig::preset(const std::string& name) {
    ModelConfig c;
    if (name == "qwen3-30b-mini") {
        c.num_experts = 128;
        c.top_k = 8;
    } else if (name == "gpt-oss-20b-mini") {
        c.num_experts = 32;
        c.top_k = 4;
    } else if (name == "ling-lite-mini") {
        c.num_experts = 64;
        c.top_k = 6;
    } else if (name == "qwen3-next-80b-mini") {
        c.num_experts = 256;
        c.top_k = 10;
    } else {
        throw InvalidInput("unknown model preset '" + name +
                           "' (expected one of: qwen3-30b-mini, gpt-oss-20b-mini, ling-lite-mini, "
                           "qwen3-next-80b-mini)");
    }
    return c;
}

std::vector<std::string> ModelConfig::preset_names() {
    return {"qwen3-30b-mini", "gpt-oss-20b-mini", "ling-lite-mini", "qwen3-next-80b-mini"};
}

void ModelConfig::validate() const {
    if (vocab_size < 1 || hidden_dim < 1 || num_layers < 1 || num_experts < 1 ||
        expert_hidden_dim < 1)
        throw InvalidInput("model config: all dimensions must be >= 1");
    if (top_k < 1 || top_k > num_experts)
        throw InvalidInput("model config: top_k must satisfy 1 <= top_k <= num_experts");
}

namespace {

void fill_uniform(Matrix& m, int fan_in, Rng& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : m.data) v = rng.uniform(-s, s);
}

void rms_norm(const std::vector<double>& h, std::vector<double>& out) {
    double ss = 0.0;
    for (double v : h) ss += v * v;
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(h.size()) + 1e-6);
    out.resize(h.size());
    for (size_t i = 0; i < h.size(); ++i) out[i] = h[i] * inv;
}

// y = x^T W for W of shape (len(x), len(y)).
void matvec(const Matrix& w, const std::vector<double>& x, std::vector<double>& y) {
    y.assign(w.cols, 0.0);
    for (int i = 0; i < w.rows; ++i) {
        const double xi = x[i];
        const double* row = w.row(i);
        for (int j = 0; j < w.cols; ++j) y[j] += xi * row[j];
    }
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

}  // namespace

Model build_model(const ModelConfig& config) {
    config.validate();
    Model m;
    m.config = config;
    Rng rng(config.seed);

    m.embedding = Matrix(config.vocab_size, config.hidden_dim);
    fill_uniform(m.embedding, config.hidden_dim, rng);

    m.layers.resize(config.num_layers);
    for (auto& layer : m.layers) {
        layer.w_gate = Matrix(config.hidden_dim, config.num_experts);
        fill_uniform(layer.w_gate, config.hidden_dim, rng);
        layer.experts.resize(config.num_experts);
        for (auto& ex : layer.experts) {
            ex.w_in = Matrix(config.hidden_dim, config.expert_hidden_dim);
            fill_uniform(ex.w_in, config.hidden_dim, rng);
            ex.w_out = Matrix(config.expert_hidden_dim, config.hidden_dim);
            fill_uniform(ex.w_out, config.expert_hidden_dim, rng);
        }
    }

    m.out_head = Matrix(config.hidden_dim, config.vocab_size);
    fill_uniform(m.out_head, config.hidden_dim, rng);
    return m;
}

uint64_t Model::param_checksum() const {
    uint64_t h = 0xcbf29ce484222325ull;
    auto fold = [&h](const Matrix& m) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(m.data.data());
        for (size_t i = 0; i < m.data.size() * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ull;
        }
    };
    fold(embedding);
    for (const auto& layer : layers) {
        fold(layer.w_gate);
        for (const auto& ex : layer.experts) {
            fold(ex.w_in);
            fold(ex.w_out);
        }
    }
    fold(out_head);
    return h;
}

namespace {

constexpr char kCheckpointMagic[8] = {'E', 'S', 'M', 'O', 'D', 'E', 'L', '1'};

void write_u64(std::ostream& os, uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64(std::istream& is) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return v;
}

void write_matrix(std::ostream& os, const Matrix& m) {
    os.write(reinterpret_cast<const char*>(m.data.data()),
             static_cast<std::streamsize>(m.data.size() * sizeof(double)));
}

void read_matrix(std::istream& is, Matrix& m) {
    is.read(reinterpret_cast<char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(double)));
}

}  // namespace

void save_model(const Model& model, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InvalidInput("save_model: cannot open '" + path.string() + "'");
    os.write(kCheckpointMagic, 8);
    const auto& c = model.config;
    for (uint64_t v : {static_cast<uint64_t>(c.vocab_size), static_cast<uint64_t>(c.hidden_dim),
                       static_cast<uint64_t>(c.num_layers), static_cast<uint64_t>(c.num_experts),
                       static_cast<uint64_t>(c.top_k), static_cast<uint64_t>(c.expert_hidden_dim),
                       c.seed})
        write_u64(os, v);
    write_matrix(os, model.embedding);
    for (const auto& layer : model.layers) {
        write_matrix(os, layer.w_gate);
        for (const auto& ex : layer.experts) {
            write_matrix(os, ex.w_in);
            write_matrix(os, ex.w_out);
        }
    }
    write_matrix(os, model.out_head);
    if (!os) throw InvalidInput("save_model: write failed for '" + path.string() + "'");
}

Model load_model(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InvalidInput("load_model: cannot open '" + path.string() + "'");
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw InvalidInput("load_model: bad magic in '" + path.string() + "'");
    ModelConfig c;
    c.vocab_size = static_cast<int>(read_u64(is));
    c.hidden_dim = static_cast<int>(read_u64(is));
    c.num_layers = static_cast<int>(read_u64(is));
    c.num_experts = static_cast<int>(read_u64(is));
    c.top_k = static_cast<int>(read_u64(is));
    c.expert_hidden_dim = static_cast<int>(read_u64(is));
    c.seed = read_u64(is);
    c.validate();

    Model m;
    m.config = c;
    m.embedding = Matrix(c.vocab_size, c.hidden_dim);
    read_matrix(is, m.embedding);
    m.layers.resize(c.num_layers);
    for (auto& layer : m.layers) {
        layer.w_gate = Matrix(c.hidden_dim, c.num_experts);
        read_matrix(is, layer.w_gate);
        layer.experts.resize(c.num_experts);
        for (auto& ex : layer.experts) {
            ex.w_in = Matrix(c.hidden_dim, c.expert_hidden_dim);
            read_matrix(is, ex.w_in);
            ex.w_out = Matrix(c.expert_hidden_dim, c.hidden_dim);
            read_matrix(is, ex.w_out);
        }
    }
    m.out_head = Matrix(c.hidden_dim, c.vocab_size);
    read_matrix(is, m.out_head);
    if (!is) throw InvalidInput("load_model: truncated checkpoint '" + path.string() + "'");
    return m;
}

namespace {

// One token position through the whole stack. Returns the number of routing
// rng draws consumed.
uint64_t process_position(const Model& model, int token, int position, const SamplerSpec& spec,
                          uint64_t route_base, Phase phase, TraceEntry* entries,
                          double* logits_out) {
    std::vector<double> h(model.embedding.row(token),
                          model.embedding.row(token) + model.config.hidden_dim);
    std::vector<double> hn, gate_logits, u;
    uint64_t draws = 0;

    for (int l = 0; l < model.config.num_layers; ++l) {
        const LayerParams& layer = model.layers[l];
        rms_norm(h, hn);
        matvec(layer.w_gate, hn, gate_logits);
        RouterDistribution dist = router_probs(gate_logits);

        ExpertSelection sel;
        if (spec.kind == SamplerKind::Greedy) {
            sel = greedy_select(dist, spec.k);
        } else {
            Rng child(seed_mix(seed_mix(route_base, static_cast<uint64_t>(l)),
                               static_cast<uint64_t>(position)));
            sel = expert_sample_select(dist, spec, child, entries != nullptr);
            draws += child.draw_count();
        }

        std::vector<int> chosen = sel.selected();
        std::vector<std::vector<double>> outs(chosen.size());
        for (size_t e = 0; e < chosen.size(); ++e) {
            const ExpertParams& ex = layer.experts[chosen[e]];
            matvec(ex.w_in, hn, u);
            for (double& v : u) v = silu(v);
            matvec(ex.w_out, u, outs[e]);
        }
        std::vector<double> combined = combine_expert_outputs(sel, outs);
        for (size_t i = 0; i < h.size(); ++i) h[i] += combined[i];

        if (entries) {
            TraceEntry& entry = entries[l];
            entry.layer = l;
            entry.position = position;
            entry.phase = phase;
            entry.dist = std::move(dist);
            entry.selection = std::move(sel);
        }
    }

    rms_norm(h, hn);
    std::vector<double> logits;
    matvec(model.out_head, hn, logits);
    std::copy(logits.begin(), logits.end(), logits_out);
    return draws;
}

ForwardResult forward_impl(const Model& model, std::span<const int> tokens,
                           const SamplerSpec& spec, uint64_t route_base, int position_offset,
                           Phase phase, RouteTrace* trace, bool parallel) {
    if (tokens.empty()) throw InvalidInput("forward: empty token sequence");
    for (int t : tokens) {
        if (t < 0 || t >= model.config.vocab_size) throw InvalidInput("forward: token out of vocab");
    }
    spec.validate(model.config.num_experts);

    const int n_tokens = static_cast<int>(tokens.size());
    const int n_layers = model.config.num_layers;
    ForwardResult res;
    res.logits = Matrix(n_tokens, model.config.vocab_size);

    size_t trace_base = 0;
    if (trace) {
        trace_base = trace->entries.size();
        trace->entries.resize(trace_base + static_cast<size_t>(n_tokens) * n_layers);
    }

    uint64_t total_draws = 0;
#pragma omp parallel for schedule(static) reduction(+ : total_draws) if (parallel)
    for (int t = 0; t < n_tokens; ++t) {
        TraceEntry* entries =
            trace ? &trace->entries[trace_base + static_cast<size_t>(t) * n_layers] : nullptr;
        total_draws += process_position(model, tokens[t], position_offset + t, spec, route_base,
                                        phase, entries, res.logits.row(t));
    }
    res.rng_draws = total_draws;
    return res;
}

}  // namespace

ForwardResult forward(const Model& model, std::span<const int> tokens, const SamplerSpec& spec,
                      Rng& rng, RouteTrace* trace) {
    const uint64_t base = spec.kind == SamplerKind::ExpertSample ? rng.next_u64() : 0;
    return forward_impl(model, tokens, spec, base, 0, Phase::Prefill, trace, true);
}

ForwardResult forward_serial(const Model& model, std::span<const int> tokens,
                             const SamplerSpec& spec, Rng& rng, RouteTrace* trace) {
    const uint64_t base = spec.kind == SamplerKind::ExpertSample ? rng.next_u64() : 0;
    return forward_impl(model, tokens, spec, base, 0, Phase::Prefill, trace, false);
}

GenConfig GenConfig::greedy(int max_new_tokens) {
    GenConfig g;
    g.max_new_tokens = max_new_tokens;
    g.token_temperature = 0.0;
    g.top_p = 1.0;
    g.top_k_tokens.reset();
    return g;
}

GenConfig GenConfig::normal(int max_new_tokens) {
    GenConfig g;
    g.max_new_tokens = max_new_tokens;
    g.token_temperature = 0.7;
    g.top_p = 0.8;
    g.top_k_tokens = 20;
    return g;
}

GenConfig GenConfig::high(int max_new_tokens) {
    GenConfig g;
    g.max_new_tokens = max_new_tokens;
    g.token_temperature = 1.3;
    g.top_p = 0.98;
    g.top_k_tokens.reset();
    return g;
}

GenConfig GenConfig::preset(const std::string& name, int max_new_tokens) {
    if (name == "greedy") return greedy(max_new_tokens);
    if (name == "normal") return normal(max_new_tokens);
    if (name == "high") return high(max_new_tokens);
    throw InvalidInput("unknown gen preset '" + name + "' (expected greedy, normal or high)");
}

void GenConfig::validate() const {
    if (max_new_tokens < 1) throw InvalidInput("gen.max_new_tokens must be >= 1");
    if (token_temperature < 0.0) throw InvalidInput("gen.token_temperature must be >= 0");
    if (top_p <= 0.0 || top_p > 1.0) throw InvalidInput("gen.top_p must be in (0, 1]");
    if (top_k_tokens && *top_k_tokens < 1) throw InvalidInput("gen.top_k_tokens must be >= 1");
}

std::vector<std::pair<int, double>> truncate_token_probs(std::span<const double> probs,
                                                         std::optional<int> top_k, double top_p) {
    const int n = static_cast<int>(probs.size());
    const int keep_k = top_k ? std::min(*top_k, n) : n;
    std::vector<int> order = rank_by_score(probs, keep_k);

    // Nucleus rule: smallest prefix of the sorted list whose mass reaches
    // top_p; the element crossing the threshold is kept.
    std::vector<std::pair<int, double>> kept;
    double cum = 0.0;
    for (int idx : order) {
        kept.emplace_back(idx, probs[idx]);
        cum += probs[idx];
        if (cum >= top_p) break;
    }
    double sum = 0.0;
    for (const auto& [idx, p] : kept) sum += p;
    for (auto& [idx, p] : kept) p /= sum;
    return kept;
}

int sample_token(std::span<const double> logits, const GenConfig& gen, Rng& token_rng) {
    const int n = static_cast<int>(logits.size());
    if (gen.token_temperature == 0.0) {
        int best = 0;
        for (int i = 1; i < n; ++i) {
            if (logits[i] > logits[best]) best = i;
        }
        return best;
    }
    std::vector<double> scaled(n);
    for (int i = 0; i < n; ++i) scaled[i] = logits[i] / gen.token_temperature;
    std::vector<double> probs = softmax(scaled);
    std::vector<std::pair<int, double>> kept = truncate_token_probs(probs, gen.top_k_tokens, gen.top_p);

    const double u = token_rng.uniform01();
    double cum = 0.0;
    for (const auto& [idx, p] : kept) {
        cum += p;
        if (u <= cum) return idx;
    }
    return kept.back().first;
}

GenerateResult generate(const Model& model, std::span<const int> prompt, const GenConfig& gen,
                        const SamplerSpec& spec, Rng& rng, bool record_trace) {
    gen.validate();
    if (prompt.empty()) throw InvalidInput("generate: empty prompt");

    // Substream derivation is fixed as routing first, then token noise, and
    // happens for every strategy kind: a degenerate ExpertSample run and a
    // Greedy run with the same seed must see identical token noise.
    const uint64_t route_base = rng.next_u64();
    Rng token_rng(rng.next_u64());

    GenerateResult res;
    RouteTrace* trace = record_trace ? &res.trace : nullptr;

    ForwardResult step = forward_impl(model, prompt, spec, route_base, 0, Phase::Prefill, trace, true);
    res.rng_draws += step.rng_draws;

    std::vector<double> last_logits(step.logits.row(static_cast<int>(prompt.size()) - 1),
                                    step.logits.row(static_cast<int>(prompt.size()) - 1) +
                                        model.config.vocab_size);
    int position = static_cast<int>(prompt.size());
    for (int t = 0; t < gen.max_new_tokens; ++t) {
        const int next = sample_token(last_logits, gen, token_rng);
        res.tokens.push_back(next);
        const int tok[1] = {next};
        step = forward_impl(model, std::span<const int>(tok, 1), spec, route_base, position,
                            Phase::Decode, trace, false);
        res.rng_draws += step.rng_draws;
        last_logits.assign(step.logits.row(0), step.logits.row(0) + model.config.vocab_size);
        ++position;
    }
    return res;
}

}  // namespace es
