#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recordkit/dataset.hpp"
#include "recordkit/graph.hpp"
#include "recordkit/rng.hpp"
#include "recordkit/schedule.hpp"
#include "recordkit/tensor.hpp"

namespace recordkit {

struct ModelDims {
    size_t d_z = 16;      // latent width
    size_t d_e = 16;      // token embedding width; conditioning width equals this
    size_t d_t = 16;      // time embedding width
    size_t hidden = 64;   // denoiser hidden width
    size_t vocab = 64;    // token ids in [0, vocab), 0 is the pad/empty token
    size_t concepts = 4;  // canonical tokens 1..concepts
    size_t max_len = 16;  // positional table rows

    size_t denoiser_input() const { return d_z + d_t + d_e; }
    bool operator==(const ModelDims&) const = default;
};

constexpr int kPadToken = 0;

// The discrete prompt: a fixed-length list of vocabulary ids.
struct TokenSequence {
    std::vector<int> ids;

    size_t size() const { return ids.size(); }
    bool operator==(const TokenSequence&) const = default;
};

void validate_tokens(const TokenSequence& tokens, size_t vocab, size_t max_len);
Tensor tokens_to_tensor(const TokenSequence& tokens);

// Token + positional tables and one shared per-position affine+tanh mixing
// layer; the conditioning vector is the mean over positions.
struct TextEncoder {
    Tensor table;  // [vocab, d_e]
    Tensor pos;    // [max_len, d_e]
    Tensor mix_w;  // [d_e, d_e]
    Tensor mix_b;  // [d_e]
};

// Feed-forward conditional noise predictor on concat[z_t; temb; c].
// Hidden activations h1/h2 are the "down.tap" / "mid.tap" probes.
struct Denoiser {
    Tensor w1, b1;  // [d_in, hidden], [hidden]
    Tensor w2, b2;  // [hidden, hidden], [hidden]
    Tensor w3, b3;  // [hidden, d_z], [d_z]
};

struct TrajectoryRecord {
    std::vector<Tensor> down_tap;  // one entry per generation step, t = T-1 .. 0
    std::vector<Tensor> mid_tap;
    std::vector<int> prompt;
    std::string model_id;
    uint64_t seed = 0;

    const std::vector<Tensor>& tap(const std::string& name) const;
};

struct SampleOutput {
    Tensor z0;
    TrajectoryRecord taps;
    bool has_taps = false;
};

class Model {
public:
    ModelDims dims;
    Schedule schedule;
    ConceptDataset dataset;
    TextEncoder encoder;
    Denoiser denoiser;
    double final_train_loss = 0.0;

    TokenSequence canonical_prompt(size_t concept_id) const;
    TokenSequence empty_prompt() const;

    Tensor encode_text(const TokenSequence& tokens) const;
    // Conditioning from a free [len, d_e] embedding matrix fed to the
    // mixing/pooling stage in place of table rows.
    Tensor encode_embedding(const Tensor& embed) const;
    // Stage-one embedding of a prompt: table rows stacked, [len, d_e].
    Tensor prompt_embedding(const TokenSequence& tokens) const;

    Tensor time_embedding(size_t t) const;
    Tensor time_embedding_rows(const std::vector<size_t>& ts) const;

    const Tensor& empty_conditioning() const { return empty_cond_; }
    void refresh_cached();

    std::vector<Tensor*> encoder_params();
    std::vector<Tensor*> denoiser_params();
    std::vector<const Tensor*> denoiser_params() const;

private:
    Tensor empty_cond_;
};

Model init_model(const ModelDims& dims, const Schedule& schedule, const ConceptDataset& dataset,
                 uint64_t master_seed);

// Encoder as a reusable graph; with `from_tokens` the embedding matrix is
// gathered from the table by an ids input, otherwise it is a free input.
struct EncoderGraph {
    Graph g;
    NodeId ids = 0;
    NodeId embed = 0;  // gather output, or the free embedding input
    NodeId table = 0, pos = 0, mix_w = 0, mix_b = 0;
    NodeId cond = 0;  // [1, d_e]
};

EncoderGraph build_encoder_graph(const ModelDims& dims, size_t length, bool from_tokens);
void bind_encoder_params(EncoderGraph& eg, const TextEncoder& enc);

// Batched denoiser evaluation with params bound once.
class DenoiserEval {
public:
    DenoiserEval(const Model& model, size_t batch);

    // z [B,d_z], ts.size()==B, cond [B,d_e] -> eps_hat [B,d_z].
    const Tensor& eval(const Tensor& z, const std::vector<size_t>& ts, const Tensor& cond);
    const Tensor& h1() const { return g_.value(h1_); }
    const Tensor& h2() const { return g_.value(h2_); }

private:
    const Model& model_;
    size_t batch_;
    Graph g_;
    NodeId z_ = 0, temb_ = 0, cond_ = 0, h1_ = 0, h2_ = 0, out_ = 0;
};

// Denoiser MLP wired from an existing conditioning node (tiled over the
// batch); used by the training, erasure, and attack loss graphs.
struct DenoiserNodes {
    NodeId h1 = 0, h2 = 0, out = 0;
    NodeId w1 = 0, b1 = 0, w2 = 0, b2 = 0, w3 = 0, b3 = 0;
};

DenoiserNodes attach_denoiser(Graph& g, const ModelDims& dims, NodeId z, NodeId temb,
                              NodeId cond_rows, const std::string& prefix);
void bind_denoiser_params(Graph& g, const DenoiserNodes& nodes, const Denoiser& den);

// ‖denoiser(z, temb, encode(M)) - target‖² with free prompt embedding M.
struct CondLossGraph {
    Graph g;
    NodeId embed = 0;   // [S, d_e]
    NodeId z = 0;       // [B, d_z]
    NodeId temb = 0;    // [B, d_t]
    NodeId target = 0;  // [B, d_z]
    NodeId cond = 0;
    NodeId eps_out = 0;
    NodeId loss_sum = 0;   // sum over the batch
    NodeId loss_mean = 0;  // mean over the batch
    DenoiserNodes den;
};

CondLossGraph build_cond_loss_graph(const ModelDims& dims, size_t length, size_t batch);
void bind_cond_loss_params(CondLossGraph& lg, const TextEncoder& enc, const Denoiser& den);

// Ancestral DDPM sampling from z_T ~ N(0, I); bitwise deterministic in
// (seed, prompt, model). Taps are recorded only when requested.
SampleOutput sample(const Model& model, const TokenSequence& tokens, uint64_t seed,
                    bool record_taps = false, const std::string& model_id = "");

// Same walk driven by an explicit conditioning row [1, d_e]; used when the
// prompt lives in embedding space rather than token space.
SampleOutput sample_with_conditioning(const Model& model, const Tensor& cond, uint64_t seed,
                                      bool record_taps = false, const std::string& model_id = "");

}  // namespace recordkit
