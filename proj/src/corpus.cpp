#include "eegcn/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "eegcn/errors.hpp"

namespace eegcn {

using nlohmann::json;

void validate_sentence(const Sentence& s) {
    const std::size_t n = s.size();
    if (s.entity_tags.size() != n) {
        throw ValidationError("entity_tags: length " + std::to_string(s.entity_tags.size()) +
                              " does not match " + std::to_string(n) + " tokens");
    }
    if (s.dep_head.size() != n) {
        throw ValidationError("dep_head: length " + std::to_string(s.dep_head.size()) +
                              " does not match " + std::to_string(n) + " tokens");
    }
    if (s.dep_label.size() != n) {
        throw ValidationError("dep_label: length " + std::to_string(s.dep_label.size()) +
                              " does not match " + std::to_string(n) + " tokens");
    }
    int roots = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const int h = s.dep_head[i];
        if (h < 0 || static_cast<std::size_t>(h) > n) {
            throw ValidationError("dep_head: value " + std::to_string(h) + " at token " +
                                  std::to_string(i) + " exceeds sentence length " +
                                  std::to_string(n));
        }
        if (h == 0) {
            ++roots;
        } else if (static_cast<std::size_t>(h) == i + 1) {
            throw ValidationError("dep_head: token " + std::to_string(i) +
                                  " is its own head");
        }
    }
    if (roots != 1) {
        throw ValidationError("dep_head: expected exactly one ROOT, found " +
                              std::to_string(roots));
    }
    int prev_end = 0;
    for (std::size_t k = 0; k < s.triggers.size(); ++k) {
        const Trigger& t = s.triggers[k];
        if (t.start < 0 || t.end <= t.start || static_cast<std::size_t>(t.end) > n) {
            throw ValidationError("triggers: span (" + std::to_string(t.start) + ", " +
                                  std::to_string(t.end) + ") out of bounds for " +
                                  std::to_string(n) + " tokens");
        }
        if (t.start < prev_end) {
            throw ValidationError("triggers: spans overlap or are unsorted at index " +
                                  std::to_string(k));
        }
        prev_end = t.end;
    }
}

void truncate_sentence(Sentence& s, std::size_t max_len) {
    if (s.size() <= max_len) return;
    s.tokens.resize(max_len);
    s.entity_tags.resize(max_len);
    s.dep_head.resize(max_len);
    s.dep_label.resize(max_len);

    std::vector<Trigger> kept;
    for (const Trigger& t : s.triggers) {
        if (static_cast<std::size_t>(t.end) <= max_len) kept.push_back(t);
    }
    s.triggers = std::move(kept);

    // An edge whose head was cut off is dropped; the orphan re-attaches to the
    // surviving root. If the root itself was cut, promote the leftmost orphan.
    int root = -1;
    for (std::size_t i = 0; i < max_len; ++i) {
        if (s.dep_head[i] == 0) root = static_cast<int>(i);
    }
    for (std::size_t i = 0; i < max_len; ++i) {
        if (s.dep_head[i] > static_cast<int>(max_len)) {
            if (root < 0) {
                s.dep_head[i] = 0;
                root = static_cast<int>(i);
            } else {
                s.dep_head[i] = root + 1;
            }
        }
    }
}

// --- TagSet ----------------------------------------------------------------

TagSet::TagSet(std::vector<std::string> event_types)
    : event_types_(std::move(event_types)) {
    for (std::size_t i = 0; i < event_types_.size(); ++i) {
        if (!index_.emplace(event_types_[i], static_cast<int>(i)).second) {
            throw ArgumentError("duplicate event type '" + event_types_[i] + "'");
        }
    }
}

int TagSet::type_index(const std::string& type) const {
    auto it = index_.find(type);
    if (it == index_.end()) {
        throw VocabularyError("unknown event type '" + type + "'");
    }
    return it->second;
}

int TagSet::begin_id(const std::string& type) const { return 1 + 2 * type_index(type); }
int TagSet::inside_id(const std::string& type) const { return 2 + 2 * type_index(type); }

int TagSet::id_of(const std::string& tag) const {
    if (tag == "O") return kOutside;
    if (tag.size() > 2 && tag[1] == '-') {
        if (tag[0] == 'B') return begin_id(tag.substr(2));
        if (tag[0] == 'I') return inside_id(tag.substr(2));
    }
    throw VocabularyError("unknown tag '" + tag + "'");
}

std::string TagSet::tag_of(int id) const {
    if (id == kOutside) return "O";
    if (id < 0 || static_cast<std::size_t>(id) >= size()) {
        throw VocabularyError("tag id " + std::to_string(id) + " out of range");
    }
    return (is_begin(id) ? "B-" : "I-") + type_of(id);
}

const std::string& TagSet::type_of(int id) const {
    if (id <= 0 || static_cast<std::size_t>(id) >= size()) {
        throw VocabularyError("tag id " + std::to_string(id) + " has no event type");
    }
    return event_types_[(id - 1) / 2];
}

std::vector<int> tags_for(const Sentence& s, const TagSet& tags) {
    std::vector<int> out(s.size(), TagSet::kOutside);
    for (const Trigger& t : s.triggers) {
        out[t.start] = tags.begin_id(t.type);
        for (int i = t.start + 1; i < t.end; ++i) out[i] = tags.inside_id(t.type);
    }
    return out;
}

std::vector<Trigger> decode_tags(const std::vector<int>& tag_ids, const TagSet& tags) {
    std::vector<Trigger> spans;
    int open_start = -1;
    std::string open_type;
    auto close = [&](int end) {
        if (open_start >= 0) spans.push_back({open_start, end, open_type});
        open_start = -1;
    };
    for (std::size_t i = 0; i < tag_ids.size(); ++i) {
        const int id = tag_ids[i];
        if (id == TagSet::kOutside) {
            close(static_cast<int>(i));
        } else if (tags.is_begin(id)) {
            close(static_cast<int>(i));
            open_start = static_cast<int>(i);
            open_type = tags.type_of(id);
        } else {
            // Inside tag: extends a matching open span, otherwise starts one.
            const std::string& type = tags.type_of(id);
            if (open_start < 0 || open_type != type) {
                close(static_cast<int>(i));
                open_start = static_cast<int>(i);
                open_type = type;
            }
        }
    }
    close(static_cast<int>(tag_ids.size()));
    return spans;
}

// --- Vocab -----------------------------------------------------------------

Vocab::Vocab() {
    items_ = {"<pad>", "<unk>"};
    index_ = {{items_[0], kPad}, {items_[1], kUnk}};
}

Vocab Vocab::from_items(std::vector<std::string> items) {
    if (items.size() < 2 || items[0] != "<pad>" || items[1] != "<unk>") {
        throw FormatError("vocabulary items must start with <pad>, <unk>");
    }
    Vocab v;
    v.items_ = std::move(items);
    v.index_.clear();
    for (std::size_t i = 0; i < v.items_.size(); ++i) {
        if (!v.index_.emplace(v.items_[i], static_cast<int>(i)).second) {
            throw FormatError("duplicate vocabulary item '" + v.items_[i] + "'");
        }
    }
    return v;
}

int Vocab::add(const std::string& s) {
    auto it = index_.find(s);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(items_.size());
    items_.push_back(s);
    index_.emplace(s, id);
    return id;
}

int Vocab::id_of(const std::string& s) const {
    auto it = index_.find(s);
    return it == index_.end() ? kUnk : it->second;
}

int Vocab::strict_id_of(const std::string& s) const {
    auto it = index_.find(s);
    if (it == index_.end()) throw VocabularyError("unknown item '" + s + "'");
    return it->second;
}

bool Vocab::contains(const std::string& s) const { return index_.count(s) != 0; }

const std::string& Vocab::token_of(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= items_.size()) {
        throw VocabularyError("vocabulary id " + std::to_string(id) + " out of range");
    }
    return items_[id];
}

Vocabs build_vocabs(const std::vector<Sentence>& train) {
    Vocabs v;
    for (const Sentence& s : train) {
        for (const std::string& w : s.tokens) v.words.add(w);
        for (const std::string& e : s.entity_tags) v.entities.add(e);
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s.dep_head[i] != 0) v.labels.add(s.dep_label[i]);
        }
    }
    return v;
}

EncodedSentence encode_sentence(const Sentence& s, const Vocabs& v, const TagSet& tags,
                                bool allow_unk_label) {
    validate_sentence(s);
    EncodedSentence enc;
    const std::size_t n = s.size();
    enc.words.reserve(n);
    enc.entities.reserve(n);
    enc.labels.reserve(n);
    enc.heads.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        enc.words.push_back(v.words.id_of(s.tokens[i]));
        enc.entities.push_back(v.entities.id_of(s.entity_tags[i]));
        if (s.dep_head[i] == 0) {
            enc.root = static_cast<int>(i);
            enc.heads.push_back(-1);
            enc.labels.push_back(v.labels.id_of(s.dep_label[i]));
        } else {
            enc.heads.push_back(s.dep_head[i] - 1);
            enc.labels.push_back(allow_unk_label ? v.labels.id_of(s.dep_label[i])
                                                 : v.labels.strict_id_of(s.dep_label[i]));
        }
    }
    enc.gold = tags_for(s, tags);
    enc.triggers = s.triggers;
    return enc;
}

std::vector<Batch> make_batches(const std::vector<EncodedSentence>& sentences,
                                std::size_t batch_size, std::size_t max_len,
                                std::uint64_t shuffle_seed) {
    if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
    std::vector<std::size_t> order(sentences.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(shuffle_seed);
    rng.shuffle(order);

    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        Batch b;
        for (std::size_t k = start; k < end; ++k) {
            const EncodedSentence& s = sentences[order[k]];
            if (s.size() > max_len) {
                throw ArgumentError("sentence of length " + std::to_string(s.size()) +
                                    " exceeds max_len " + std::to_string(max_len));
            }
            b.lengths.push_back(s.size());
            b.n_max = std::max(b.n_max, s.size());
            b.sentences.push_back(s);
        }
        const std::size_t rows = b.sentences.size();
        b.words.assign(rows * b.n_max, Vocab::kPad);
        b.entities.assign(rows * b.n_max, Vocab::kPad);
        b.gold.assign(rows * b.n_max, kIgnoreTag);
        b.token_mask.assign(rows * b.n_max, 0);
        for (std::size_t r = 0; r < rows; ++r) {
            const EncodedSentence& s = b.sentences[r];
            for (std::size_t i = 0; i < s.size(); ++i) {
                b.words[r * b.n_max + i] = s.words[i];
                b.entities[r * b.n_max + i] = s.entities[i];
                b.gold[r * b.n_max + i] = s.gold[i];
                b.token_mask[r * b.n_max + i] = 1;
            }
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

// --- JSONL corpus format -----------------------------------------------------

Sentence sentence_from_json_line(const std::string& line, std::size_t line_no) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    auto fail = [&](const std::string& what) -> ParseError {
        return ParseError("line " + std::to_string(line_no) + ": " + what);
    };
    if (!j.is_object()) throw fail("expected a JSON object");
    for (const char* key : {"tokens", "entity_tags", "dep_head", "dep_label", "triggers"}) {
        if (!j.contains(key)) throw fail(std::string("missing key '") + key + "'");
    }
    Sentence s;
    try {
        s.tokens = j.at("tokens").get<std::vector<std::string>>();
        s.entity_tags = j.at("entity_tags").get<std::vector<std::string>>();
        s.dep_head = j.at("dep_head").get<std::vector<int>>();
        s.dep_label = j.at("dep_label").get<std::vector<std::string>>();
        for (const json& t : j.at("triggers")) {
            if (!t.is_array() || t.size() != 3) {
                throw fail("each trigger must be [start, end, type]");
            }
            s.triggers.push_back({t[0].get<int>(), t[1].get<int>(),
                                  t[2].get<std::string>()});
        }
    } catch (const json::exception& e) {
        throw fail(e.what());
    }
    return s;
}

std::string sentence_to_json_line(const Sentence& s) {
    json j;
    j["tokens"] = s.tokens;
    j["entity_tags"] = s.entity_tags;
    j["dep_head"] = s.dep_head;
    j["dep_label"] = s.dep_label;
    json triggers = json::array();
    for (const Trigger& t : s.triggers) triggers.push_back({t.start, t.end, t.type});
    j["triggers"] = triggers;
    return j.dump();
}

std::vector<Sentence> load_corpus(const std::string& path, std::size_t max_len,
                                  std::size_t* truncated_count) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open corpus file '" + path + "'");
    std::vector<Sentence> corpus;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        Sentence s = sentence_from_json_line(line, line_no);
        if (s.size() > max_len && truncated_count) ++*truncated_count;
        truncate_sentence(s, max_len);
        try {
            validate_sentence(s);
        } catch (const ValidationError& e) {
            throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
        }
        corpus.push_back(std::move(s));
    }
    return corpus;
}

void save_corpus(const std::vector<Sentence>& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ArgumentError("cannot write corpus file '" + path + "'");
    for (const Sentence& s : corpus) out << sentence_to_json_line(s) << '\n';
}

// --- embeddings --------------------------------------------------------------

EmbeddingLoad load_embeddings(const std::string& path, const Vocab& words,
                              std::size_t dim, Rng& rng) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open embedding file '" + path + "'");
    std::string header;
    if (!std::getline(in, header)) throw FormatError("embedding file has no header");
    std::istringstream hs(header);
    long long count = 0, file_dim = 0;
    if (!(hs >> count >> file_dim)) {
        throw FormatError("embedding header must be 'count dim', got '" + header + "'");
    }
    if (file_dim != static_cast<long long>(dim)) {
        throw FormatError("embedding dimension " + std::to_string(file_dim) +
                          " does not match requested " + std::to_string(dim));
    }

    EmbeddingLoad result;
    result.table = Tensor({words.size(), dim});
    const double bound = 0.5 / static_cast<double>(dim);
    // Missing rows are drawn first, in id order, so the random stream does not
    // depend on the file contents; covered rows are then overwritten.
    for (std::size_t r = 1; r < words.size(); ++r) {
        for (std::size_t c = 0; c < dim; ++c) {
            result.table.at(r, c) = rng.uniform(-bound, bound);
        }
    }

    std::vector<bool> seen(words.size(), false);
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        std::vector<double> vec(dim);
        for (std::size_t c = 0; c < dim; ++c) {
            if (!(ls >> vec[c])) {
                throw FormatError("line " + std::to_string(line_no) +
                                  ": expected " + std::to_string(dim) + " values");
            }
        }
        double extra;
        if (ls >> extra) {
            throw FormatError("line " + std::to_string(line_no) +
                              ": more values than header dimension " + std::to_string(dim));
        }
        if (!words.contains(word)) continue;
        const int id = words.strict_id_of(word);
        if (id == Vocab::kPad) continue;
        if (seen[id]) {
            ++result.duplicates;
        } else {
            seen[id] = true;
            ++result.covered;
        }
        for (std::size_t c = 0; c < dim; ++c) {
            result.table.at(static_cast<std::size_t>(id), c) = vec[c];
        }
    }
    return result;
}

// --- synthetic corpus ---------------------------------------------------------

namespace {

const std::vector<std::string> kSubjLabels = {"nsubj", "nsubjpass", "csubj",
                                              "csubjpass", "expl"};
const std::vector<std::string> kObjLabels = {"dobj", "iobj", "nmod",
                                             "xcomp", "ccomp", "obl"};
const std::vector<std::string> kFillerLabels = {
    "det",       "amod",     "case",    "advmod",  "mark",      "cc",
    "conj",      "cop",      "aux",     "auxpass", "neg",       "nummod",
    "appos",     "compound", "mwe",     "acl",     "advcl",     "discourse",
    "parataxis", "dep",      "punct",   "poss",    "prep",      "pobj",
    "attr",      "acomp",    "agent",   "quantmod", "predet",   "preconj",
    "infmod",    "partmod"};
const std::vector<std::string> kParticles = {"pp0", "pp1", "pp2", "pp3", "pp4"};

struct ComboTable {
    std::vector<std::string> subj, obj;
    // combos_by_type[t] lists (subj index, obj index) pairs mapping to type t.
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> combos_by_type;
};

ComboTable make_combos(std::size_t n_types) {
    ComboTable t;
    std::size_t a = 1;
    while (a * a < n_types) ++a;
    const std::size_t b = (n_types + a - 1) / a;
    for (std::size_t i = 0; i < a; ++i) {
        t.subj.push_back(i < kSubjLabels.size() ? kSubjLabels[i]
                                                : "nsubjx" + std::to_string(i));
    }
    for (std::size_t i = 0; i < b; ++i) {
        t.obj.push_back(i < kObjLabels.size() ? kObjLabels[i]
                                              : "dobjx" + std::to_string(i));
    }
    t.combos_by_type.resize(n_types);
    for (std::size_t si = 0; si < a; ++si) {
        for (std::size_t oi = 0; oi < b; ++oi) {
            t.combos_by_type[(si * b + oi) % n_types].push_back({si, oi});
        }
    }
    return t;
}

Sentence gen_sentence(const SyntheticSpec& spec, const ComboTable& combos, Rng& rng) {
    const std::size_t span = spec.len_max - spec.len_min + 1;
    std::size_t n = spec.len_min + rng.below(span);
    const bool with_trigger = n >= 3 && !rng.bernoulli(spec.triggerless_rate);

    Sentence s;
    s.tokens.assign(n, "");
    s.entity_tags.assign(n, "O");
    s.dep_head.assign(n, 0);
    s.dep_label.assign(n, "root");

    auto filler_word = [&] { return "fw" + std::to_string(rng.below(spec.filler_words)); };
    auto arg_word = [&] { return "aw" + std::to_string(rng.below(spec.arg_words)); };

    if (!with_trigger) {
        const std::size_t root = rng.below(n);
        std::vector<std::size_t> attached = {root};
        s.tokens[root] = filler_word();
        for (std::size_t i = 0; i < n; ++i) {
            if (i == root) continue;
            s.tokens[i] = filler_word();
            s.dep_head[i] = static_cast<int>(attached[rng.below(attached.size())]) + 1;
            s.dep_label[i] = kFillerLabels[rng.below(kFillerLabels.size())];
            attached.push_back(i);
        }
        return s;
    }

    const bool two_token = n >= 4 && rng.bernoulli(spec.two_token_trigger_rate);
    const std::size_t ext = two_token ? 1 : 0;
    const std::size_t trig = 1 + rng.below(n - 2 - ext);
    const std::size_t trig_end = trig + 1 + ext;
    const std::size_t subj = rng.below(trig);
    const std::size_t obj = trig_end + rng.below(n - trig_end);

    const std::size_t type = rng.below(spec.event_types);
    const auto& options = combos.combos_by_type[type];
    const auto [si, oi] = options[rng.below(options.size())];

    std::size_t tw;
    if (spec.label_blind) {
        tw = rng.below(spec.trigger_words);
    } else {
        const std::size_t per = spec.trigger_words / spec.event_types;
        tw = type * per + rng.below(per);
    }
    s.tokens[trig] = "tw" + std::to_string(tw);
    s.dep_head[trig] = 0;
    s.dep_label[trig] = "root";

    s.tokens[subj] = arg_word();
    s.entity_tags[subj] = "B-PER";
    s.dep_head[subj] = static_cast<int>(trig) + 1;
    s.dep_label[subj] = combos.subj[si];

    s.tokens[obj] = arg_word();
    s.entity_tags[obj] = "B-ORG";
    s.dep_head[obj] = static_cast<int>(trig) + 1;
    s.dep_label[obj] = combos.obj[oi];

    std::vector<std::size_t> attached = {trig, subj, obj};
    if (two_token) {
        s.tokens[trig + 1] = kParticles[rng.below(kParticles.size())];
        s.dep_head[trig + 1] = static_cast<int>(trig) + 1;
        s.dep_label[trig + 1] = "prt";
        attached.push_back(trig + 1);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (i == trig || i == subj || i == obj || (two_token && i == trig + 1)) continue;
        s.tokens[i] = filler_word();
        s.dep_head[i] = static_cast<int>(attached[rng.below(attached.size())]) + 1;
        s.dep_label[i] = kFillerLabels[rng.below(kFillerLabels.size())];
        attached.push_back(i);
    }
    s.triggers.push_back({static_cast<int>(trig), static_cast<int>(trig_end),
                          "E" + std::to_string(type)});
    return s;
}

}  // namespace

SyntheticCorpus gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    if (spec.event_types == 0) throw ArgumentError("event_types must be positive");
    if (spec.len_min < 1 || spec.len_max < spec.len_min) {
        throw ArgumentError("invalid sentence length range");
    }
    if (spec.len_max < 3) {
        throw ArgumentError("len_max must be at least 3 to place a trigger core");
    }
    if (spec.trigger_words < spec.event_types) {
        throw ArgumentError("trigger_words must be at least event_types");
    }
    if (spec.arg_words == 0 || spec.filler_words == 0) {
        throw ArgumentError("word pool sizes must be positive");
    }

    const ComboTable combos = make_combos(spec.event_types);
    Rng rng(seed);
    SyntheticCorpus corpus;
    for (std::size_t t = 0; t < spec.event_types; ++t) {
        corpus.event_types.push_back("E" + std::to_string(t));
    }
    auto emit = [&](std::vector<Sentence>& dst, std::size_t count) {
        dst.reserve(count);
        for (std::size_t i = 0; i < count; ++i) {
            Sentence s = gen_sentence(spec, combos, rng);
            validate_sentence(s);
            dst.push_back(std::move(s));
        }
    };
    emit(corpus.train, spec.train);
    emit(corpus.dev, spec.dev);
    emit(corpus.test, spec.test);
    return corpus;
}

}  // namespace eegcn
