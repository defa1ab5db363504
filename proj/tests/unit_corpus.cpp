#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "eegcn/corpus.hpp"
#include "eegcn/errors.hpp"
#include "eegcn/eval.hpp"
#include "oracles.hpp"

using namespace eegcn;

namespace {

Sentence tiny_sentence() {
    Sentence s;
    s.tokens = {"Putin", "visited", "Bush"};
    s.entity_tags = {"B-PER", "O", "B-PER"};
    s.dep_head = {2, 0, 2};
    s.dep_label = {"nsubj", "root", "dobj"};
    s.triggers = {{1, 2, "Meet"}};
    return s;
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& content)
        : path("tmp_" + name) {
        std::ofstream out(path);
        out << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

std::string dump_corpus(const std::vector<Sentence>& corpus) {
    std::string out;
    for (const Sentence& s : corpus) out += sentence_to_json_line(s) + "\n";
    return out;
}

}  // namespace

TEST_CASE("sentence validation") {
    SUBCASE("minimal well-formed record") { CHECK_NOTHROW(validate_sentence(tiny_sentence())); }
    SUBCASE("head out of bounds") {
        Sentence s = tiny_sentence();
        s.dep_head = {2, 0, 5};
        CHECK_THROWS_WITH_AS(validate_sentence(s), doctest::Contains("dep_head"),
                             ValidationError);
    }
    SUBCASE("self-headed token") {
        Sentence s = tiny_sentence();
        s.dep_head = {1, 0, 2};
        CHECK_THROWS_AS(validate_sentence(s), ValidationError);
    }
    SUBCASE("exactly one root") {
        Sentence s = tiny_sentence();
        s.dep_head = {0, 0, 2};
        CHECK_THROWS_AS(validate_sentence(s), ValidationError);
        s.dep_head = {2, 3, 2};
        CHECK_THROWS_AS(validate_sentence(s), ValidationError);
    }
    SUBCASE("overlapping triggers") {
        Sentence s = tiny_sentence();
        s.triggers = {{0, 2, "Meet"}, {1, 3, "Meet"}};
        CHECK_THROWS_WITH_AS(validate_sentence(s), doctest::Contains("triggers"),
                             ValidationError);
    }
    SUBCASE("trigger out of bounds") {
        Sentence s = tiny_sentence();
        s.triggers = {{2, 4, "Meet"}};
        CHECK_THROWS_AS(validate_sentence(s), ValidationError);
    }
}

TEST_CASE("truncation") {
    Sentence s;
    s.tokens = {"a", "b", "c", "d", "e", "f"};
    s.entity_tags = {"O", "O", "O", "O", "O", "O"};
    s.dep_head = {2, 0, 2, 6, 2, 4};  // d hangs off f, f hangs off d? no: f->d
    s.dep_label = {"det", "root", "dobj", "amod", "nmod", "case"};
    s.triggers = {{1, 2, "X"}, {4, 6, "Y"}};
    SUBCASE("no-op under the limit") {
        Sentence t = s;
        truncate_sentence(t, 6);
        CHECK(t.size() == 6);
        CHECK(t.triggers.size() == 2);
    }
    SUBCASE("cut drops out-of-range spans and re-attaches orphans") {
        Sentence t = s;
        truncate_sentence(t, 4);
        CHECK(t.size() == 4);
        CHECK(t.triggers.size() == 1);  // the (4,6) trigger is gone
        // token 'd' pointed at the cut token 'f'; it re-attaches to the root
        CHECK(t.dep_head[3] == 2);
        CHECK_NOTHROW(validate_sentence(t));
    }
    SUBCASE("cut root promotes the leftmost orphan") {
        Sentence t;
        t.tokens = {"a", "b", "c"};
        t.entity_tags = {"O", "O", "O"};
        t.dep_head = {3, 3, 0};
        t.dep_label = {"det", "amod", "root"};
        truncate_sentence(t, 2);
        CHECK(t.dep_head[0] == 0);
        CHECK(t.dep_head[1] == 1);
        CHECK_NOTHROW(validate_sentence(t));
    }
}

TEST_CASE("tag set") {
    SUBCASE("33 event types give 67 tags") {
        std::vector<std::string> types;
        for (int i = 0; i < 33; ++i) types.push_back("T" + std::to_string(i));
        TagSet tags(types);
        CHECK(tags.size() == 67);
    }
    TagSet tags({"Meet", "Attack"});
    SUBCASE("id 0 is O and the mapping is a bijection") {
        CHECK(tags.id_of("O") == TagSet::kOutside);
        for (int id = 0; id < static_cast<int>(tags.size()); ++id) {
            CHECK(tags.id_of(tags.tag_of(id)) == id);
        }
        CHECK(tags.begin_id("Meet") == 1);
        CHECK(tags.inside_id("Meet") == 2);
        CHECK(tags.begin_id("Attack") == 3);
    }
    SUBCASE("unknown event type") {
        CHECK_THROWS_AS(tags.begin_id("Nope"), VocabularyError);
        CHECK_THROWS_AS(tags.id_of("B-Nope"), VocabularyError);
    }
}

TEST_CASE("tags_for and decode_tags") {
    TagSet tags({"Meet", "Attack"});
    SUBCASE("figure-style example marks the second token B-Meet") {
        std::vector<int> ids = tags_for(tiny_sentence(), tags);
        CHECK(ids == std::vector<int>{0, tags.begin_id("Meet"), 0});
    }
    SUBCASE("no triggers means all O") {
        Sentence s = tiny_sentence();
        s.triggers.clear();
        std::vector<int> ids = tags_for(s, tags);
        CHECK(ids == std::vector<int>{0, 0, 0});
    }
    SUBCASE("multi-token trigger uses B then I") {
        Sentence s = tiny_sentence();
        s.triggers = {{0, 2, "Attack"}};
        std::vector<int> ids = tags_for(s, tags);
        CHECK(ids == std::vector<int>{tags.begin_id("Attack"), tags.inside_id("Attack"), 0});
    }
    SUBCASE("unknown event type raises") {
        Sentence s = tiny_sentence();
        s.triggers = {{1, 2, "Nope"}};
        CHECK_THROWS_AS(tags_for(s, tags), VocabularyError);
    }
    SUBCASE("encode-decode round trip over random span sets") {
        Rng rng(77);
        for (int it = 0; it < 200; ++it) {
            const std::size_t n = 1 + rng.below(30);
            Sentence s;
            s.tokens.assign(n, "w");
            s.entity_tags.assign(n, "O");
            s.dep_head.assign(n, 0);
            s.dep_label.assign(n, "root");
            for (std::size_t i = 1; i < n; ++i) s.dep_head[i] = 1;
            std::size_t pos = 0;
            while (pos < n) {
                if (rng.bernoulli(0.35)) {
                    const std::size_t len = 1 + rng.below(std::min<std::size_t>(3, n - pos));
                    s.triggers.push_back({static_cast<int>(pos),
                                          static_cast<int>(pos + len),
                                          rng.bernoulli(0.5) ? "Meet" : "Attack"});
                    pos += len;
                    // a gap so adjacent same-type spans stay distinguishable
                    pos += 1;
                } else {
                    ++pos;
                }
            }
            std::vector<Trigger> decoded = decode_tags(tags_for(s, tags), tags);
            REQUIRE(decoded == s.triggers);
        }
    }
    SUBCASE("orphan inside tag starts a new span") {
        std::vector<int> ids = {0, tags.inside_id("Meet"), tags.inside_id("Meet"), 0};
        std::vector<Trigger> spans = decode_tags(ids, tags);
        REQUIRE(spans.size() == 1);
        CHECK(spans[0] == Trigger{1, 3, "Meet"});
        // type switch inside a run also starts a new span
        ids = {tags.begin_id("Meet"), tags.inside_id("Attack")};
        spans = decode_tags(ids, tags);
        REQUIRE(spans.size() == 2);
    }
}

TEST_CASE("vocab") {
    Vocab v;
    CHECK(v.size() == 2);
    CHECK(v.add("hello") == 2);
    CHECK(v.add("hello") == 2);
    CHECK(v.add("world") == 3);
    CHECK(v.id_of("nope") == Vocab::kUnk);
    CHECK_THROWS_AS(v.strict_id_of("nope"), VocabularyError);
    SUBCASE("stable across save/load via items") {
        Vocab w = Vocab::from_items(v.items());
        CHECK(w.size() == v.size());
        CHECK(w.id_of("world") == 3);
    }
    SUBCASE("from_items validates reserved rows") {
        CHECK_THROWS_AS(Vocab::from_items({"a", "b"}), FormatError);
    }
}

TEST_CASE("encode_sentence") {
    Vocabs v = build_vocabs({tiny_sentence()});
    TagSet tags({"Meet"});
    SUBCASE("known sentence round trips ids") {
        EncodedSentence enc = encode_sentence(tiny_sentence(), v, tags, false);
        CHECK(enc.size() == 3);
        CHECK(enc.root == 1);
        CHECK(enc.heads == std::vector<int>{1, -1, 1});
        CHECK(enc.gold == std::vector<int>{0, 1, 0});
    }
    SUBCASE("unknown word maps to unk") {
        Sentence s = tiny_sentence();
        s.tokens[0] = "Gorbachev";
        EncodedSentence enc = encode_sentence(s, v, tags, false);
        CHECK(enc.words[0] == Vocab::kUnk);
    }
    SUBCASE("unknown dependency label is strict by default") {
        Sentence s = tiny_sentence();
        s.dep_label[2] = "iobj";
        CHECK_THROWS_AS(encode_sentence(s, v, tags, false), VocabularyError);
        EncodedSentence enc = encode_sentence(s, v, tags, true);
        CHECK(enc.labels[2] == Vocab::kUnk);
    }
}

TEST_CASE("make_batches") {
    TagSet tags({"E0"});
    SyntheticSpec spec;
    spec.event_types = 1;
    spec.train = 61;
    spec.dev = 0;
    spec.test = 0;
    SyntheticCorpus corpus = gen_synthetic(spec, 5);
    Vocabs v = build_vocabs(corpus.train);
    std::vector<EncodedSentence> enc;
    for (const Sentence& s : corpus.train) enc.push_back(encode_sentence(s, v, tags, false));

    SUBCASE("61 sentences at batch 30 split 30/30/1") {
        std::vector<Batch> batches = make_batches(enc, 30, 50, 1);
        REQUIRE(batches.size() == 3);
        CHECK(batches[0].size() == 30);
        CHECK(batches[1].size() == 30);
        CHECK(batches[2].size() == 1);
    }
    SUBCASE("same seed gives an identical batch sequence") {
        std::vector<Batch> a = make_batches(enc, 30, 50, 42);
        std::vector<Batch> b = make_batches(enc, 30, 50, 42);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].words == b[i].words);
            CHECK(a[i].gold == b[i].gold);
        }
    }
    SUBCASE("padded positions carry pad ids and the ignore tag") {
        std::vector<Batch> batches = make_batches(enc, 30, 50, 7);
        for (const Batch& b : batches) {
            for (std::size_t r = 0; r < b.size(); ++r) {
                for (std::size_t i = b.lengths[r]; i < b.n_max; ++i) {
                    CHECK(b.words[r * b.n_max + i] == Vocab::kPad);
                    CHECK(b.gold[r * b.n_max + i] == kIgnoreTag);
                    CHECK(b.token_mask[r * b.n_max + i] == 0);
                }
            }
        }
    }
    SUBCASE("batching then un-batching reproduces the id sequences") {
        std::vector<Batch> batches = make_batches(enc, 7, 50, 9);
        std::map<std::vector<int>, int> count_in, count_out;
        for (const EncodedSentence& s : enc) ++count_in[s.words];
        for (const Batch& b : batches) {
            for (std::size_t r = 0; r < b.size(); ++r) {
                std::vector<int> words(b.words.begin() + r * b.n_max,
                                       b.words.begin() + r * b.n_max + b.lengths[r]);
                ++count_out[words];
            }
        }
        CHECK(count_in == count_out);
    }
}

TEST_CASE("jsonl corpus io") {
    SUBCASE("well-formed line loads") {
        TempFile f("ok.jsonl", sentence_to_json_line(tiny_sentence()) + "\n");
        std::vector<Sentence> corpus = load_corpus(f.path, 50);
        REQUIRE(corpus.size() == 1);
        CHECK(corpus[0].tokens == tiny_sentence().tokens);
        CHECK(corpus[0].triggers == tiny_sentence().triggers);
    }
    SUBCASE("malformed json names the line") {
        TempFile f("bad.jsonl", sentence_to_json_line(tiny_sentence()) + "\n{oops\n");
        CHECK_THROWS_WITH_AS(load_corpus(f.path, 50), doctest::Contains("line 2"),
                             ParseError);
    }
    SUBCASE("missing key names the key") {
        TempFile f("mk.jsonl", "{\"tokens\": [\"a\"], \"entity_tags\": [\"O\"]}\n");
        CHECK_THROWS_WITH_AS(load_corpus(f.path, 50), doctest::Contains("dep_head"),
                             ParseError);
    }
    SUBCASE("invariant violations name the field and line") {
        Sentence s = tiny_sentence();
        s.dep_head = {2, 0, 5};
        TempFile f("inv.jsonl", sentence_to_json_line(s) + "\n");
        CHECK_THROWS_WITH_AS(load_corpus(f.path, 50), doctest::Contains("dep_head"),
                             ValidationError);
    }
    SUBCASE("long sentences are truncated and counted") {
        Sentence s;
        for (int i = 0; i < 8; ++i) {
            s.tokens.push_back("t" + std::to_string(i));
            s.entity_tags.push_back("O");
            s.dep_head.push_back(i == 0 ? 0 : 1);
            s.dep_label.push_back(i == 0 ? "root" : "det");
        }
        TempFile f("long.jsonl", sentence_to_json_line(s) + "\n");
        std::size_t truncated = 0;
        std::vector<Sentence> corpus = load_corpus(f.path, 5, &truncated);
        CHECK(corpus[0].size() == 5);
        CHECK(truncated == 1);
    }
    SUBCASE("save/load round trip") {
        SyntheticSpec spec;
        spec.train = 25;
        spec.dev = 0;
        spec.test = 0;
        SyntheticCorpus corpus = gen_synthetic(spec, 3);
        TempFile f("rt.jsonl", dump_corpus(corpus.train));
        std::vector<Sentence> loaded = load_corpus(f.path, 50);
        REQUIRE(loaded.size() == corpus.train.size());
        CHECK(dump_corpus(loaded) == dump_corpus(corpus.train));
    }
}

TEST_CASE("embedding loader") {
    Vocab words;
    words.add("cat");
    words.add("dog");
    words.add("fish");
    SUBCASE("full coverage leaves only reserved rows random") {
        TempFile f("emb1.txt",
                   "3 2\ncat 1.0 2.0\ndog 3.0 4.0\nfish 5.0 6.0\n");
        Rng rng(1);
        EmbeddingLoad load = load_embeddings(f.path, words, 2, rng);
        CHECK(load.covered == 3);
        CHECK(load.table.at(2, 0) == 1.0);
        CHECK(load.table.at(4, 1) == 6.0);
        CHECK(load.table.at(0, 0) == 0.0);  // padding row zero
        CHECK(load.table.at(1, 0) != 0.0);  // unk row randomly initialized
    }
    SUBCASE("empty file with valid header randomizes all but padding") {
        TempFile f("emb2.txt", "0 2\n");
        Rng rng(1);
        EmbeddingLoad load = load_embeddings(f.path, words, 2, rng);
        CHECK(load.covered == 0);
        CHECK(load.table.at(0, 0) == 0.0);
        for (std::size_t r = 1; r < words.size(); ++r) {
            bool nonzero = false;
            for (std::size_t c = 0; c < 2; ++c) {
                CHECK(std::abs(load.table.at(r, c)) <= 0.25);
                if (load.table.at(r, c) != 0.0) nonzero = true;
            }
            CHECK(nonzero);
        }
    }
    SUBCASE("duplicate word keeps the last occurrence and is counted") {
        TempFile f("emb3.txt", "2 2\ncat 1.0 1.0\ncat 9.0 9.0\n");
        Rng rng(1);
        EmbeddingLoad load = load_embeddings(f.path, words, 2, rng);
        CHECK(load.duplicates == 1);
        CHECK(load.covered == 1);
        CHECK(load.table.at(2, 0) == 9.0);
    }
    SUBCASE("dimension mismatch with the header is a format error") {
        TempFile f("emb4.txt", "1 3\ncat 1.0 2.0 3.0\n");
        Rng rng(1);
        CHECK_THROWS_AS(load_embeddings(f.path, words, 2, rng), FormatError);
    }
    SUBCASE("row with wrong arity is a format error") {
        TempFile f("emb5.txt", "1 2\ncat 1.0\n");
        Rng rng(1);
        CHECK_THROWS_AS(load_embeddings(f.path, words, 2, rng), FormatError);
    }
}

TEST_CASE("synthetic generator") {
    SUBCASE("all sentences pass the validator and respect the length range") {
        SyntheticSpec spec;
        spec.event_types = 2;
        spec.train = 200;
        spec.dev = 20;
        spec.test = 20;
        SyntheticCorpus corpus = gen_synthetic(spec, 9);
        CHECK(corpus.train.size() == 200);
        CHECK(corpus.event_types == std::vector<std::string>{"E0", "E1"});
        std::size_t with_trigger = 0;
        for (const Sentence& s : corpus.train) {
            CHECK_NOTHROW(validate_sentence(s));
            CHECK(s.size() >= spec.len_min);
            CHECK(s.size() <= spec.len_max);
            with_trigger += s.triggers.empty() ? 0 : 1;
        }
        CHECK(with_trigger > 100);
    }
    SUBCASE("same seed is byte-identical") {
        SyntheticSpec spec;
        spec.train = 50;
        CHECK(dump_corpus(gen_synthetic(spec, 4).train) ==
              dump_corpus(gen_synthetic(spec, 4).train));
        CHECK(dump_corpus(gen_synthetic(spec, 4).train) !=
              dump_corpus(gen_synthetic(spec, 5).train));
    }
    SUBCASE("zero event types is an argument error") {
        SyntheticSpec spec;
        spec.event_types = 0;
        CHECK_THROWS_AS(gen_synthetic(spec, 1), ArgumentError);
    }
    SUBCASE("label inventory is rich enough for the relation benchmarks") {
        SyntheticSpec spec;
        spec.train = 500;
        SyntheticCorpus corpus = gen_synthetic(spec, 13);
        Vocabs v = build_vocabs(corpus.train);
        CHECK(v.labels.size() >= 35);
    }
    SUBCASE("label-blind corpus defeats a lexical-majority baseline") {
        SyntheticSpec spec;
        spec.label_blind = true;
        spec.train = 600;
        spec.dev = 0;
        spec.test = 200;
        SyntheticCorpus corpus = gen_synthetic(spec, 21);
        // Majority-tag-per-token baseline, trained on the train split.
        TagSet tags(corpus.event_types);
        std::map<std::string, std::map<int, int>> counts;
        for (const Sentence& s : corpus.train) {
            std::vector<int> gold = tags_for(s, tags);
            for (std::size_t i = 0; i < s.size(); ++i) ++counts[s.tokens[i]][gold[i]];
        }
        std::map<std::string, int> majority;
        for (const auto& [tok, by_tag] : counts) {
            int best_tag = 0, best = -1;
            for (const auto& [tag, c] : by_tag) {
                if (c > best) { best = c; best_tag = tag; }
            }
            majority[tok] = best_tag;
        }
        std::vector<std::vector<Trigger>> gold, pred;
        for (const Sentence& s : corpus.test) {
            gold.push_back(s.triggers);
            std::vector<int> ids(s.size(), 0);
            for (std::size_t i = 0; i < s.size(); ++i) {
                auto it = majority.find(s.tokens[i]);
                if (it != majority.end()) ids[i] = it->second;
            }
            pred.push_back(decode_tags(ids, tags));
        }
        ScoreReport report = score(gold, pred);
        CHECK(report.classification.f1() < 0.6);
        // the baseline still finds the triggers, it just cannot type them
        CHECK(report.identification.f1() > 0.6);
    }
}
