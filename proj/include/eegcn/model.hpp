#ifndef EEGCN_MODEL_HPP
#define EEGCN_MODEL_HPP

#include <cstdint>
#include <vector>

#include "eegcn/adjacency.hpp"
#include "eegcn/autodiff.hpp"
#include "eegcn/config.hpp"
#include "eegcn/corpus.hpp"

namespace eegcn {

/// Trigger tagger over a dependency parse: embedding + recurrent encoder,
/// then a stack of graph layers (edge-enhanced, vanilla, or relational
/// convolution depending on config.baseline), then a per-token softmax
/// classifier.
class Model {
public:
    Model(ModelConfig cfg, Vocabs vocabs, TagSet tags, std::uint64_t init_seed);

    struct Forward {
        ad::Var probs;                  // n x T
        std::vector<ad::Var> h_layers;  // node states after each layer
        std::vector<ad::Var> e_layers;  // adjacency tensors E^0..E^L (eegcn only)
    };

    Forward forward(ad::Tape& tape, const EncodedSentence& s, bool training);

    /// Input layer only: embeddings -> dropout -> recurrent encoder ->
    /// projection. Returns the n x hidden node-state matrix H^0.
    ad::Var encode(ad::Tape& tape, const EncodedSentence& s, bool training);

    std::vector<ad::Parameter*> parameters();

    /// Inference-mode prediction (argmax tags, decoded spans).
    std::vector<int> predict_tags(const EncodedSentence& s);
    std::vector<Trigger> predict_triggers(const EncodedSentence& s);

    const ModelConfig& config() const { return cfg_; }
    const Vocabs& vocabs() const { return vocabs_; }
    const TagSet& tags() const { return tags_; }
    EdgeVocab& edge_vocab() { return edge_vocab_; }
    const EdgeVocab& edge_vocab() const { return edge_vocab_; }

    std::size_t classifier_input_dim() const;

private:
    struct LstmDir {
        ad::Parameter wx, wh, b;
    };

    ad::Var lstm_direction(ad::Tape& tape, ad::Var x, LstmDir& dir, bool reverse);
    std::vector<ad::Var> eegcn_stack(ad::Tape& tape, const EncodedSentence& s, ad::Var h0,
                                     bool training, std::vector<ad::Var>& e_layers);
    std::vector<ad::Var> gcn_stack(ad::Tape& tape, const EncodedSentence& s, ad::Var h0,
                                   bool training);
    std::vector<ad::Var> rgcn_stack(ad::Tape& tape, const EncodedSentence& s, ad::Var h0,
                                    bool training);

    ModelConfig cfg_;
    Vocabs vocabs_;
    TagSet tags_;
    EdgeVocab edge_vocab_;

    ad::Parameter word_emb_, entity_emb_;
    LstmDir lstm_fwd_, lstm_bwd_;
    ad::Parameter proj_w_, proj_b_;
    std::vector<ad::Parameter> layer_w_;   // eegcn: one per layer; gcn: single shared
    std::vector<ad::Parameter> layer_wu_;  // eegcn with node-aware edge update
    std::vector<ad::Parameter> rel_w_;     // rgcn: one filter per relation
    ad::Parameter self_w_;                 // rgcn self filter
    ad::Parameter cls_w_, cls_b_;
};

/// Vanilla graph convolution: L stacked layers of relu(A * H * W) with one
/// shared filter. A is a binary adjacency matrix.
Tensor gcn_forward(const Tensor& a, const Tensor& h, const Tensor& w, std::size_t layers);

/// One undirected labeled edge for the relational baseline.
struct LabeledEdge {
    std::size_t a, b;
    std::size_t relation;
};

/// Relational convolution with one filter per relation plus a self filter:
/// H'_i = relu(sum_r sum_{j in N_r(i)} H_j W_r / |N_r(i)| + H_i W_self),
/// stacked over L layers with shared filters.
Tensor rgcn_forward(const std::vector<LabeledEdge>& edges, const Tensor& h,
                    const std::vector<Tensor>& rel_filters, const Tensor& self_filter,
                    std::size_t layers);

/// Places per-sentence node-state matrices into a zero-padded B x n_max x d
/// tensor (padding rows stay zero).
Tensor stack_padded(const std::vector<Tensor>& states, std::size_t n_max);

}  // namespace eegcn

#endif  // EEGCN_MODEL_HPP
