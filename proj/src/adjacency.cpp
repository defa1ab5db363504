#include "eegcn/adjacency.hpp"

#include <cmath>
#include <cstring>

#include "eegcn/errors.hpp"

namespace eegcn {

EdgeVocab::EdgeVocab(Vocab labels, std::size_t dim, Rng& rng)
    : labels_(std::move(labels)), dim_(dim) {
    // Unit-variance rows, same scale as the other trainable embedding tables.
    Tensor t({labels_.size() + 2, dim_});
    const double bound = std::sqrt(3.0);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
    table_ = ad::Parameter("edge_emb", std::move(t));
}

int EdgeVocab::id_of(const std::string& label, bool allow_unk) const {
    return allow_unk ? labels_.id_of(label) : labels_.strict_id_of(label);
}

AdjacencyStructure adjacency_structure(const EncodedSentence& s, const EdgeVocab& vocab,
                                       const AdjacencyOptions& opts) {
    const std::size_t n = s.size();
    AdjacencyStructure out;
    out.n = n;
    out.mask.assign(n * n, 0);
    if (s.root < 0) throw ValidationError("sentence has no root token");
    out.root = s.root;

    const int untyped = vocab.untyped_id();
    for (std::size_t i = 0; i < n; ++i) {
        if (s.heads[i] < 0) continue;
        const std::size_t h = static_cast<std::size_t>(s.heads[i]);
        const int label = opts.typed ? s.labels[i] : untyped;
        out.slots.push_back({h, i, label});
        out.slots.push_back({i, h, label});
        out.mask[h * n + i] = 1;
        out.mask[i * n + h] = 1;
    }
    const std::size_t r = static_cast<std::size_t>(out.root);
    out.slots.push_back({r, r, vocab.root_id()});
    out.mask[r * n + r] = 1;
    if (opts.add_all_self_loops) {
        for (std::size_t i = 0; i < n; ++i) {
            if (i == r) continue;
            out.slots.push_back({i, i, vocab.root_id()});
            out.mask[i * n + i] = 1;
        }
    }
    return out;
}

AdjacencyTensor build_adjacency(const Sentence& s, const EdgeVocab& vocab,
                                const AdjacencyOptions& opts) {
    validate_sentence(s);
    EncodedSentence enc;
    const std::size_t n = s.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (s.dep_head[i] == 0) {
            enc.root = static_cast<int>(i);
            enc.heads.push_back(-1);
            enc.labels.push_back(0);
        } else {
            enc.heads.push_back(s.dep_head[i] - 1);
            enc.labels.push_back(vocab.id_of(s.dep_label[i], opts.allow_unk_label));
        }
        enc.words.push_back(0);
        enc.entities.push_back(0);
    }
    AdjacencyStructure structure = adjacency_structure(enc, vocab, opts);

    AdjacencyTensor adj;
    adj.n = n;
    adj.p = vocab.dim();
    adj.root = structure.root;
    adj.mask = std::move(structure.mask);
    adj.e = Tensor({n, n, adj.p});
    const double* table = vocab.table().value.data();
    for (const ad::EdgeSlot& slot : structure.slots) {
        std::memcpy(adj.e.data() + (slot.i * n + slot.j) * adj.p,
                    table + static_cast<std::size_t>(slot.label) * adj.p,
                    adj.p * sizeof(double));
    }
    return adj;
}

Tensor relevance_matrix(const Tensor& e) {
    if (e.rank() != 3 || e.dim(0) != e.dim(1)) {
        throw DimensionError("relevance_matrix expects an n x n x p tensor, got " +
                             e.shape_str());
    }
    const std::size_t n = e.dim(0), p = e.dim(2);
    Tensor m({n, n});
    for (std::size_t q = 0; q < n * n; ++q) {
        double sq = 0.0;
        const double* v = e.data() + q * p;
        for (std::size_t c = 0; c < p; ++c) sq += v[c] * v[c];
        m[q] = std::sqrt(sq);
    }
    return m;
}

}  // namespace eegcn
