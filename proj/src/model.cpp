#include "eegcn/model.hpp"

#include <cmath>
#include <cstring>

#include "eegcn/errors.hpp"
#include "eegcn/kernels.hpp"

namespace eegcn {

namespace {

Tensor xavier(std::size_t rows, std::size_t cols, Rng& rng) {
    Tensor t({rows, cols});
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

// Unit-variance coordinates, the usual scale for embeddings trained from
// scratch. The mean-over-channels in the node update shrinks as 1/sqrt(p),
// so a timid init here starves the whole graph stack of signal.
Tensor embedding_table(std::size_t rows, std::size_t dim, Rng& rng) {
    Tensor t({rows, dim});
    const double bound = std::sqrt(3.0);
    // Padding row stays zero.
    for (std::size_t r = 1; r < rows; ++r) {
        for (std::size_t c = 0; c < dim; ++c) t.at(r, c) = rng.uniform(-bound, bound);
    }
    return t;
}

}  // namespace

Model::Model(ModelConfig cfg, Vocabs vocabs, TagSet tags, std::uint64_t init_seed)
    : cfg_(std::move(cfg)),
      vocabs_(std::move(vocabs)),
      tags_(std::move(tags)),
      edge_vocab_([&] {
          Rng r(Rng::splitmix(init_seed ^ 0xed6e5eedULL));
          return EdgeVocab(vocabs_.labels, cfg_.edge_dim, r);
      }()) {
    if (cfg_.hidden == 0 || cfg_.edge_dim == 0 || cfg_.layers == 0) {
        throw ArgumentError("hidden, edge_dim and layers must be positive");
    }
    Rng rng(init_seed);
    const std::size_t in_dim = cfg_.word_dim + cfg_.entity_dim;
    const std::size_t h = cfg_.lstm_hidden;
    const std::size_t d = cfg_.hidden;
    const std::size_t p = cfg_.edge_dim;

    word_emb_ = ad::Parameter("word_emb",
                              embedding_table(vocabs_.words.size(), cfg_.word_dim, rng));
    entity_emb_ = ad::Parameter(
        "entity_emb", embedding_table(vocabs_.entities.size(), cfg_.entity_dim, rng));

    auto lstm_dir = [&](const char* prefix) {
        LstmDir dir;
        dir.wx = ad::Parameter(std::string(prefix) + ".wx", xavier(in_dim, 4 * h, rng));
        dir.wh = ad::Parameter(std::string(prefix) + ".wh", xavier(h, 4 * h, rng));
        Tensor b({1, 4 * h});
        for (std::size_t j = h; j < 2 * h; ++j) b[j] = 1.0;  // forget gate starts open
        dir.b = ad::Parameter(std::string(prefix) + ".b", std::move(b));
        return dir;
    };
    lstm_fwd_ = lstm_dir("lstm_fwd");
    lstm_bwd_ = lstm_dir("lstm_bwd");

    const std::size_t proj_in = cfg_.use_bilstm ? 2 * h : in_dim;
    proj_w_ = ad::Parameter("proj.w", xavier(proj_in, d, rng));
    proj_b_ = ad::Parameter("proj.b", Tensor({1, d}));

    switch (cfg_.baseline) {
        case BaselineKind::EEGCN:
            for (std::size_t l = 0; l < cfg_.layers; ++l) {
                layer_w_.emplace_back("layer" + std::to_string(l) + ".w",
                                      xavier(d, d, rng));
            }
            if (cfg_.use_naeu) {
                for (std::size_t l = 0; l < cfg_.layers; ++l) {
                    layer_wu_.emplace_back("layer" + std::to_string(l) + ".wu",
                                           xavier(p + 2 * d, p, rng));
                }
            }
            break;
        case BaselineKind::GCN:
            layer_w_.emplace_back("gcn.w", xavier(d, d, rng));
            break;
        case BaselineKind::RGCN:
            for (std::size_t r = 0; r < vocabs_.labels.size(); ++r) {
                rel_w_.emplace_back("rel" + std::to_string(r) + ".w", xavier(d, d, rng));
            }
            self_w_ = ad::Parameter("self.w", xavier(d, d, rng));
            break;
    }

    cls_w_ = ad::Parameter("cls.w", xavier(classifier_input_dim(), tags_.size(), rng));
    cls_b_ = ad::Parameter("cls.b", Tensor({1, tags_.size()}));
}

std::size_t Model::classifier_input_dim() const {
    return cfg_.classifier_input == ClassifierInput::ConcatLayers
               ? cfg_.layers * cfg_.hidden
               : cfg_.hidden;
}

std::vector<ad::Parameter*> Model::parameters() {
    std::vector<ad::Parameter*> out = {&word_emb_, &entity_emb_};
    if (cfg_.use_bilstm) {
        for (LstmDir* dir : {&lstm_fwd_, &lstm_bwd_}) {
            out.push_back(&dir->wx);
            out.push_back(&dir->wh);
            out.push_back(&dir->b);
        }
    }
    out.push_back(&proj_w_);
    out.push_back(&proj_b_);
    if (cfg_.baseline == BaselineKind::EEGCN) out.push_back(&edge_vocab_.table());
    for (ad::Parameter& w : layer_w_) out.push_back(&w);
    for (ad::Parameter& wu : layer_wu_) out.push_back(&wu);
    for (ad::Parameter& w : rel_w_) out.push_back(&w);
    if (cfg_.baseline == BaselineKind::RGCN) out.push_back(&self_w_);
    out.push_back(&cls_w_);
    out.push_back(&cls_b_);
    return out;
}

ad::Var Model::lstm_direction(ad::Tape& tape, ad::Var x, LstmDir& dir, bool reverse) {
    const std::size_t n = x.shape()[0];
    const std::size_t h = cfg_.lstm_hidden;
    ad::Var wx = tape.param(dir.wx);
    ad::Var wh = tape.param(dir.wh);
    ad::Var b = tape.param(dir.b);
    ad::Var state_h = tape.constant(Tensor({1, h}), "lstm_h0");
    ad::Var state_c = tape.constant(Tensor({1, h}), "lstm_c0");
    std::vector<ad::Var> outputs(n);
    for (std::size_t step = 0; step < n; ++step) {
        const std::size_t t = reverse ? n - 1 - step : step;
        ad::Var xt = ad::slice_rows(x, t, t + 1);
        ad::Var z = ad::add(ad::add(ad::matmul(xt, wx), ad::matmul(state_h, wh)), b);
        ad::Var gi = ad::sigmoid(ad::slice_cols(z, 0, h));
        ad::Var gf = ad::sigmoid(ad::slice_cols(z, h, 2 * h));
        ad::Var go = ad::sigmoid(ad::slice_cols(z, 2 * h, 3 * h));
        ad::Var gg = ad::tanh(ad::slice_cols(z, 3 * h, 4 * h));
        state_c = ad::add(ad::mul(gf, state_c), ad::mul(gi, gg));
        state_h = ad::mul(go, ad::tanh(state_c));
        outputs[t] = state_h;
    }
    return ad::concat(outputs, 0);
}

ad::Var Model::encode(ad::Tape& tape, const EncodedSentence& s, bool training) {
    ad::Var words = ad::rows(tape.param(word_emb_), s.words);
    ad::Var ents = ad::rows(tape.param(entity_emb_), s.entities);
    ad::Var x = ad::concat({words, ents}, 1);
    x = ad::dropout(x, cfg_.dropout, training);
    ad::Var features = x;
    if (cfg_.use_bilstm) {
        ad::Var hf = lstm_direction(tape, x, lstm_fwd_, false);
        ad::Var hb = lstm_direction(tape, x, lstm_bwd_, true);
        features = ad::concat({hf, hb}, 1);
    }
    return ad::add_rowvec(ad::matmul(features, tape.param(proj_w_)), tape.param(proj_b_));
}

std::vector<ad::Var> Model::eegcn_stack(ad::Tape& tape, const EncodedSentence& s,
                                        ad::Var h0, bool training,
                                        std::vector<ad::Var>& e_layers) {
    AdjacencyOptions opts;
    opts.typed = cfg_.use_typed_labels;
    opts.add_all_self_loops = cfg_.add_all_self_loops;
    AdjacencyStructure structure = adjacency_structure(s, edge_vocab_, opts);

    ad::Var table = tape.param(edge_vocab_.table());
    ad::Var e = ad::adjacency_init(table, structure.slots, s.size());
    e_layers.push_back(e);

    std::vector<ad::Var> h_layers;
    ad::Var h = h0;
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        h = ad::eanu(e, h, tape.param(layer_w_[l]));
        h = ad::dropout(h, cfg_.dropout, training);
        h_layers.push_back(h);
        if (cfg_.use_naeu) {
            e = ad::naeu(e, h, tape.param(layer_wu_[l]),
                         cfg_.naeu_masked ? &structure.mask : nullptr);
        }
        e_layers.push_back(e);
    }
    return h_layers;
}

std::vector<ad::Var> Model::gcn_stack(ad::Tape& tape, const EncodedSentence& s,
                                      ad::Var h0, bool training) {
    AdjacencyOptions opts;
    opts.add_all_self_loops = cfg_.add_all_self_loops;
    AdjacencyStructure structure = adjacency_structure(s, edge_vocab_, opts);
    const std::size_t n = s.size();
    Tensor a({n, n});
    for (std::size_t q = 0; q < n * n; ++q) a[q] = structure.mask[q] ? 1.0 : 0.0;
    ad::Var avar = tape.constant(std::move(a), "adjacency");
    ad::Var w = tape.param(layer_w_[0]);

    std::vector<ad::Var> h_layers;
    ad::Var h = h0;
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        h = ad::relu(ad::matmul(avar, ad::matmul(h, w)));
        h = ad::dropout(h, cfg_.dropout, training);
        h_layers.push_back(h);
    }
    return h_layers;
}

std::vector<ad::Var> Model::rgcn_stack(ad::Tape& tape, const EncodedSentence& s,
                                       ad::Var h0, bool training) {
    const std::size_t n = s.size();
    const std::size_t relations = vocabs_.labels.size();
    // Dense per-relation normalized adjacency, one n x n matrix per relation
    // in the inventory.
    std::vector<ad::Var> norm_adj(relations);
    {
        std::vector<Tensor> mats(relations, Tensor({n, n}));
        for (std::size_t i = 0; i < n; ++i) {
            if (s.heads[i] < 0) continue;
            const std::size_t h = static_cast<std::size_t>(s.heads[i]);
            const std::size_t r = static_cast<std::size_t>(s.labels[i]);
            mats[r].at(h, i) = 1.0;
            mats[r].at(i, h) = 1.0;
        }
        for (std::size_t r = 0; r < relations; ++r) {
            for (std::size_t i = 0; i < n; ++i) {
                double deg = 0.0;
                for (std::size_t j = 0; j < n; ++j) deg += mats[r].at(i, j);
                if (deg > 0.0) {
                    for (std::size_t j = 0; j < n; ++j) mats[r].at(i, j) /= deg;
                }
            }
            norm_adj[r] = tape.constant(std::move(mats[r]), "rel_adjacency");
        }
    }
    std::vector<ad::Var> filters(relations);
    for (std::size_t r = 0; r < relations; ++r) filters[r] = tape.param(rel_w_[r]);
    ad::Var wself = tape.param(self_w_);

    std::vector<ad::Var> h_layers;
    ad::Var h = h0;
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        std::vector<ad::Var> terms;
        terms.reserve(relations + 1);
        terms.push_back(ad::matmul(h, wself));
        for (std::size_t r = 0; r < relations; ++r) {
            terms.push_back(ad::matmul(norm_adj[r], ad::matmul(h, filters[r])));
        }
        h = ad::relu(ad::add_n(terms));
        h = ad::dropout(h, cfg_.dropout, training);
        h_layers.push_back(h);
    }
    return h_layers;
}

Model::Forward Model::forward(ad::Tape& tape, const EncodedSentence& s, bool training) {
    if (s.size() == 0) throw ArgumentError("cannot run the model on an empty sentence");
    Forward out;
    ad::Var h0 = encode(tape, s, training);
    switch (cfg_.baseline) {
        case BaselineKind::EEGCN:
            out.h_layers = eegcn_stack(tape, s, h0, training, out.e_layers);
            break;
        case BaselineKind::GCN:
            out.h_layers = gcn_stack(tape, s, h0, training);
            break;
        case BaselineKind::RGCN:
            out.h_layers = rgcn_stack(tape, s, h0, training);
            break;
    }
    ad::Var cls_in = cfg_.classifier_input == ClassifierInput::ConcatLayers
                         ? ad::concat(out.h_layers, 1)
                         : out.h_layers.back();
    out.probs = ad::softmax_rows(
        ad::add_rowvec(ad::matmul(cls_in, tape.param(cls_w_)), tape.param(cls_b_)));
    return out;
}

std::vector<int> Model::predict_tags(const EncodedSentence& s) {
    ad::Tape tape;
    Forward f = forward(tape, s, /*training=*/false);
    const Tensor& probs = f.probs.value();
    const std::size_t n = probs.dim(0), width = probs.dim(1);
    std::vector<int> out(n, TagSet::kOutside);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = probs.data() + i * width;
        std::size_t best = 0;
        for (std::size_t j = 1; j < width; ++j) {
            if (row[j] > row[best]) best = j;
        }
        out[i] = static_cast<int>(best);
    }
    return out;
}

std::vector<Trigger> Model::predict_triggers(const EncodedSentence& s) {
    return decode_tags(predict_tags(s), tags_);
}

Tensor gcn_forward(const Tensor& a, const Tensor& h, const Tensor& w, std::size_t layers) {
    if (a.rank() != 2 || a.dim(0) != a.dim(1)) {
        throw DimensionError("gcn_forward: adjacency must be square, got " + a.shape_str());
    }
    if (h.rank() != 2 || h.dim(0) != a.dim(0) || w.rank() != 2 ||
        w.dim(0) != h.dim(1) || w.dim(1) != h.dim(1)) {
        throw DimensionError("gcn_forward: inconsistent shapes A=" + a.shape_str() +
                             " H=" + h.shape_str() + " W=" + w.shape_str());
    }
    const std::size_t n = h.dim(0), d = h.dim(1);
    Tensor state = h;
    Tensor g({n, d}), z({n, d});
    for (std::size_t l = 0; l < layers; ++l) {
        kernels::gemm(false, false, n, d, d, state.data(), w.data(), g.data(), false);
        kernels::gemm(false, false, n, d, n, a.data(), g.data(), z.data(), false);
        kernels::relu(z.data(), z.numel(), state.data());
    }
    return state;
}

Tensor rgcn_forward(const std::vector<LabeledEdge>& edges, const Tensor& h,
                    const std::vector<Tensor>& rel_filters, const Tensor& self_filter,
                    std::size_t layers) {
    const std::size_t n = h.dim(0), d = h.dim(1);
    const std::size_t relations = rel_filters.size();
    for (const Tensor& w : rel_filters) {
        if (w.shape() != Shape{d, d}) {
            throw DimensionError("rgcn_forward: relation filter shape " + w.shape_str() +
                                 " does not match hidden " + std::to_string(d));
        }
    }
    std::vector<Tensor> norm_adj(relations, Tensor({n, n}));
    for (const LabeledEdge& e : edges) {
        if (e.a >= n || e.b >= n || e.relation >= relations) {
            throw ArgumentError("rgcn_forward: edge out of range");
        }
        norm_adj[e.relation].at(e.a, e.b) = 1.0;
        norm_adj[e.relation].at(e.b, e.a) = 1.0;
    }
    for (Tensor& m : norm_adj) {
        for (std::size_t i = 0; i < n; ++i) {
            double deg = 0.0;
            for (std::size_t j = 0; j < n; ++j) deg += m.at(i, j);
            if (deg > 0.0) {
                for (std::size_t j = 0; j < n; ++j) m.at(i, j) /= deg;
            }
        }
    }
    Tensor state = h;
    Tensor acc({n, d}), g({n, d});
    for (std::size_t l = 0; l < layers; ++l) {
        kernels::gemm(false, false, n, d, d, state.data(), self_filter.data(), acc.data(),
                      false);
        for (std::size_t r = 0; r < relations; ++r) {
            kernels::gemm(false, false, n, d, d, state.data(), rel_filters[r].data(),
                          g.data(), false);
            kernels::gemm(false, false, n, d, n, norm_adj[r].data(), g.data(), acc.data(),
                          true);
        }
        kernels::relu(acc.data(), acc.numel(), state.data());
    }
    return state;
}

Tensor stack_padded(const std::vector<Tensor>& states, std::size_t n_max) {
    if (states.empty()) throw ArgumentError("stack_padded: empty input");
    const std::size_t d = states[0].dim(1);
    Tensor out({states.size(), n_max, d});
    for (std::size_t b = 0; b < states.size(); ++b) {
        const Tensor& s = states[b];
        if (s.rank() != 2 || s.dim(1) != d || s.dim(0) > n_max) {
            throw DimensionError("stack_padded: bad state shape " + s.shape_str());
        }
        std::memcpy(out.data() + b * n_max * d, s.data(), s.numel() * sizeof(double));
    }
    return out;
}

}  // namespace eegcn
