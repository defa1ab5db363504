#ifndef EEGCN_CORPUS_HPP
#define EEGCN_CORPUS_HPP

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "eegcn/rng.hpp"
#include "eegcn/tensor.hpp"

namespace eegcn {

/// Trigger span with exclusive end, 0-based token indices.
struct Trigger {
    int start = 0;
    int end = 0;
    std::string type;

    friend bool operator==(const Trigger&, const Trigger&) = default;
};

/// One parsed, entity-annotated sentence. dep_head is 1-based with 0 marking
/// the syntactic ROOT; dep_label[i] labels the edge (dep_head[i], i) and is
/// unused for the root token.
struct Sentence {
    std::vector<std::string> tokens;
    std::vector<std::string> entity_tags;
    std::vector<int> dep_head;
    std::vector<std::string> dep_label;
    std::vector<Trigger> triggers;

    std::size_t size() const { return tokens.size(); }
};

/// Throws ValidationError naming the offending field.
void validate_sentence(const Sentence& s);

/// Cut a sentence down to max_len tokens. Edges touching cut tokens are
/// dropped; surviving tokens orphaned by the cut are re-attached to the
/// surviving root (or the leftmost orphan is promoted to root if the root
/// itself was cut). Triggers reaching past the cut are dropped.
void truncate_sentence(Sentence& s, std::size_t max_len);

/// Bijection between trigger tags and ids: id 0 is O, then B-t/I-t pairs in
/// event-type order, 2N+1 tags total.
class TagSet {
public:
    static constexpr int kOutside = 0;

    explicit TagSet(std::vector<std::string> event_types);

    std::size_t size() const { return 2 * event_types_.size() + 1; }
    const std::vector<std::string>& event_types() const { return event_types_; }

    int begin_id(const std::string& type) const;
    int inside_id(const std::string& type) const;
    int id_of(const std::string& tag) const;
    std::string tag_of(int id) const;

    bool is_begin(int id) const { return id > 0 && (id - 1) % 2 == 0; }
    bool is_inside(int id) const { return id > 0 && (id - 1) % 2 == 1; }
    const std::string& type_of(int id) const;

private:
    int type_index(const std::string& type) const;

    std::vector<std::string> event_types_;
    std::unordered_map<std::string, int> index_;
};

std::vector<int> tags_for(const Sentence& s, const TagSet& tags);
std::vector<Trigger> decode_tags(const std::vector<int>& tag_ids, const TagSet& tags);

/// Dense string<->id map with reserved padding (0) and unknown (1) ids.
class Vocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;

    Vocab();
    static Vocab from_items(std::vector<std::string> items);

    int add(const std::string& s);
    int id_of(const std::string& s) const;         // kUnk when missing
    int strict_id_of(const std::string& s) const;  // VocabularyError when missing
    bool contains(const std::string& s) const;
    const std::string& token_of(int id) const;
    std::size_t size() const { return items_.size(); }
    const std::vector<std::string>& items() const { return items_; }

private:
    std::vector<std::string> items_;
    std::unordered_map<std::string, int> index_;
};

struct Vocabs {
    Vocab words;
    Vocab entities;
    Vocab labels;
};

Vocabs build_vocabs(const std::vector<Sentence>& train);

/// Sentence mapped to ids. heads are 0-based with -1 at the root token.
struct EncodedSentence {
    std::vector<int> words;
    std::vector<int> entities;
    std::vector<int> labels;
    std::vector<int> heads;
    std::vector<int> gold;
    std::vector<Trigger> triggers;
    int root = -1;

    std::size_t size() const { return words.size(); }
};

EncodedSentence encode_sentence(const Sentence& s, const Vocabs& v, const TagSet& tags,
                                bool allow_unk_label);

/// Gold id for padded positions, excluded from loss and metrics.
constexpr int kIgnoreTag = -1;

struct Batch {
    std::vector<EncodedSentence> sentences;
    std::size_t n_max = 0;
    std::vector<std::size_t> lengths;
    // Padded B x n_max views.
    std::vector<int> words;
    std::vector<int> entities;
    std::vector<int> gold;
    std::vector<std::uint8_t> token_mask;

    std::size_t size() const { return sentences.size(); }
};

std::vector<Batch> make_batches(const std::vector<EncodedSentence>& sentences,
                                std::size_t batch_size, std::size_t max_len,
                                std::uint64_t shuffle_seed);

std::vector<Sentence> load_corpus(const std::string& path, std::size_t max_len,
                                  std::size_t* truncated_count = nullptr);
void save_corpus(const std::vector<Sentence>& corpus, const std::string& path);
Sentence sentence_from_json_line(const std::string& line, std::size_t line_no);
std::string sentence_to_json_line(const Sentence& s);

struct EmbeddingLoad {
    Tensor table;  // |V| x dim
    std::size_t covered = 0;
    std::size_t duplicates = 0;
};

/// Text format: header "count dim", then one "word v1 ... vdim" per line.
/// Rows for in-vocab words are copied (last occurrence wins); missing words
/// are initialized uniformly in [-0.5/dim, 0.5/dim]; the padding row is zero.
EmbeddingLoad load_embeddings(const std::string& path, const Vocab& words,
                              std::size_t dim, Rng& rng);

/// Synthetic corpus: a trigger's event type is a function of the dependency
/// labels of its subject and object slots, so the labels carry the signal.
/// In the standard variant the trigger word additionally identifies the type;
/// the label-blind variant draws trigger words independently of the type so
/// only the labels disambiguate.
struct SyntheticSpec {
    std::size_t event_types = 5;
    std::size_t train = 2000;
    std::size_t dev = 300;
    std::size_t test = 300;
    std::size_t len_min = 4;
    std::size_t len_max = 9;
    std::size_t trigger_words = 30;
    std::size_t arg_words = 60;
    std::size_t filler_words = 120;
    bool label_blind = false;
    double triggerless_rate = 0.2;
    // Two-token spans exercise the B/I scheme but their inside tag only
    // reaches the classifier through a two-hop echo (non-root tokens carry no
    // self-loop), which does not train at this corpus scale. Off by default.
    double two_token_trigger_rate = 0.0;
};

struct SyntheticCorpus {
    std::vector<Sentence> train;
    std::vector<Sentence> dev;
    std::vector<Sentence> test;
    std::vector<std::string> event_types;
};

SyntheticCorpus gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace eegcn

#endif  // EEGCN_CORPUS_HPP
