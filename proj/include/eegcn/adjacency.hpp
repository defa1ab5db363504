#ifndef EEGCN_ADJACENCY_HPP
#define EEGCN_ADJACENCY_HPP

#include <cstdint>
#include <vector>

#include "eegcn/autodiff.hpp"
#include "eegcn/corpus.hpp"
#include "eegcn/rng.hpp"
#include "eegcn/tensor.hpp"

namespace eegcn {

/// Dependency-label inventory backing the trainable relation embedding table.
/// Rows follow the corpus label vocabulary, with two reserved rows appended:
/// the ROOT self-loop relation and the shared vector used when typed labels
/// are switched off.
class EdgeVocab {
public:
    EdgeVocab(Vocab labels, std::size_t dim, Rng& rng);

    int id_of(const std::string& label, bool allow_unk) const;
    int root_id() const { return static_cast<int>(labels_.size()); }
    int untyped_id() const { return static_cast<int>(labels_.size()) + 1; }
    std::size_t rows() const { return labels_.size() + 2; }
    std::size_t dim() const { return dim_; }
    const Vocab& labels() const { return labels_; }

    ad::Parameter& table() { return table_; }
    const ad::Parameter& table() const { return table_; }

private:
    Vocab labels_;
    std::size_t dim_;
    ad::Parameter table_;
};

struct AdjacencyOptions {
    bool typed = true;
    bool add_all_self_loops = false;
    bool allow_unk_label = false;
};

/// Edge slots and pair mask for one sentence: both directions of every
/// dependency edge plus the ROOT self-loop.
struct AdjacencyStructure {
    std::vector<ad::EdgeSlot> slots;
    std::vector<std::uint8_t> mask;  // n*n
    int root = -1;
    std::size_t n = 0;
};

AdjacencyStructure adjacency_structure(const EncodedSentence& s, const EdgeVocab& vocab,
                                       const AdjacencyOptions& opts);

/// Value snapshot of the initial adjacency tensor (n x n x p).
struct AdjacencyTensor {
    Tensor e;
    std::vector<std::uint8_t> mask;
    int root = -1;
    std::size_t n = 0;
    std::size_t p = 0;
};

AdjacencyTensor build_adjacency(const Sentence& s, const EdgeVocab& vocab,
                                const AdjacencyOptions& opts = {});

/// Per-pair l2 norm of the relation vectors: M[i,j] = |E[i,j,:]|.
Tensor relevance_matrix(const Tensor& e);

}  // namespace eegcn

#endif  // EEGCN_ADJACENCY_HPP
