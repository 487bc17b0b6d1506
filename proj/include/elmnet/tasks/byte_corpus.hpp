#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "elmnet/error.hpp"
#include "elmnet/rng.hpp"

namespace elmnet::tasks {

/// A byte file tokenized over its own alphabet, with contiguous
/// train/valid/test splits.
struct ByteCorpus {
    std::vector<std::uint8_t> bytes;
    std::vector<std::uint8_t> vocab;  ///< distinct bytes, ascending
    std::array<int, 256> token_of{};  ///< -1 for bytes absent from the corpus
    std::vector<int> tokens;
    std::size_t train_end = 0;
    std::size_t valid_end = 0;
    int window = 100;

    int vocab_size() const noexcept { return static_cast<int>(vocab.size()); }

    struct Range {
        std::size_t begin = 0, end = 0;
        std::size_t size() const noexcept { return end - begin; }
    };
    Range train() const noexcept { return {0, train_end}; }
    Range valid() const noexcept { return {train_end, valid_end}; }
    Range test() const noexcept { return {valid_end, tokens.size()}; }

    std::vector<std::uint8_t> detokenize(std::size_t begin, std::size_t end) const {
        std::vector<std::uint8_t> out;
        out.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i) out.push_back(vocab[static_cast<std::size_t>(tokens[i])]);
        return out;
    }
};

inline ByteCorpus make_byte_corpus(std::vector<std::uint8_t> bytes, int window, double train_frac = 0.90,
                                   double valid_frac = 0.05) {
    if (bytes.empty()) throw IoError("byte corpus is empty");
    if (window < 1) throw InvalidConfig("must be >= 1", "task.window");
    if (!(train_frac > 0.0 && valid_frac >= 0.0 && train_frac + valid_frac < 1.0))
        throw InvalidConfig("split fractions must be positive and sum below 1", "task.split");
    ByteCorpus c;
    c.bytes = std::move(bytes);
    c.window = window;
    std::array<bool, 256> seen{};
    for (auto b : c.bytes) seen[b] = true;
    c.token_of.fill(-1);
    for (int b = 0; b < 256; ++b) {
        if (seen[static_cast<std::size_t>(b)]) {
            c.token_of[static_cast<std::size_t>(b)] = static_cast<int>(c.vocab.size());
            c.vocab.push_back(static_cast<std::uint8_t>(b));
        }
    }
    c.tokens.reserve(c.bytes.size());
    for (auto b : c.bytes) c.tokens.push_back(c.token_of[b]);
    const auto n = c.tokens.size();
    c.train_end = static_cast<std::size_t>(static_cast<double>(n) * train_frac);
    c.valid_end = static_cast<std::size_t>(static_cast<double>(n) * (train_frac + valid_frac));
    return c;
}

inline ByteCorpus load_byte_corpus(const std::filesystem::path& path, int window, double train_frac = 0.90,
                                   double valid_frac = 0.05) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("failed reading corpus file '" + path.string() + "'");
    if (bytes.empty()) throw IoError("corpus file '" + path.string() + "' is empty");
    return make_byte_corpus(std::move(bytes), window, train_frac, valid_frac);
}

/// Sidecar manifest recording split byte offsets and the vocabulary.
inline nlohmann::json corpus_manifest(const ByteCorpus& c, std::string_view source = {}) {
    nlohmann::json j;
    j["source"] = std::string(source);
    j["n_bytes"] = c.bytes.size();
    j["vocab_size"] = c.vocab.size();
    j["vocab"] = c.vocab;
    j["window"] = c.window;
    j["splits"] = {{"train", {{"begin", 0}, {"end", c.train_end}}},
                   {"valid", {{"begin", c.train_end}, {"end", c.valid_end}}},
                   {"test", {{"begin", c.valid_end}, {"end", c.tokens.size()}}}};
    return j;
}

/// One training window: inputs tokens[pos, pos+len), targets the next token
/// (or -1 past the end of the split).
struct Window {
    std::vector<int> inputs;
    std::vector<int> targets;
    bool starts_stream = false;  ///< first window of this stream's region (state must be reset)
};

/// B parallel streams over a split; stream b walks its own contiguous
/// region window by window, so carried hidden state stays meaningful. One
/// epoch visits every byte of the split exactly once (regions tile the split,
/// windows tile each region).
class StreamIterator {
public:
    StreamIterator(const ByteCorpus& corpus, ByteCorpus::Range range, int batch, int window)
        : corpus_(&corpus), range_(range), window_(window) {
        if (batch < 1) throw InvalidConfig("must be >= 1", "train.batch");
        if (range.size() < static_cast<std::size_t>(batch)) throw InvalidConfig("split smaller than batch", "train.batch");
        const std::size_t per = range.size() / static_cast<std::size_t>(batch);
        for (int b = 0; b < batch; ++b) {
            const std::size_t lo = range.begin + per * static_cast<std::size_t>(b);
            const std::size_t hi = (b + 1 == batch) ? range.end : lo + per;
            regions_.push_back({lo, hi});
            pos_.push_back(lo);
        }
    }

    int batch() const noexcept { return static_cast<int>(regions_.size()); }
    std::size_t epochs() const noexcept { return epochs_; }
    const std::vector<ByteCorpus::Range>& regions() const noexcept { return regions_; }

    std::vector<Window> next() {
        std::vector<Window> out(regions_.size());
        bool wrapped_all = true;
        for (std::size_t b = 0; b < regions_.size(); ++b) {
            auto& w = out[b];
            if (pos_[b] >= regions_[b].end) pos_[b] = regions_[b].begin;
            w.starts_stream = pos_[b] == regions_[b].begin;
            const std::size_t lo = pos_[b];
            const std::size_t hi = std::min(lo + static_cast<std::size_t>(window_), regions_[b].end);
            for (std::size_t i = lo; i < hi; ++i) {
                w.inputs.push_back(corpus_->tokens[i]);
                w.targets.push_back(i + 1 < range_.end ? corpus_->tokens[i + 1] : -1);
            }
            pos_[b] = hi;
            if (hi < regions_[b].end) wrapped_all = false;
        }
        if (wrapped_all) ++epochs_;
        return out;
    }

private:
    const ByteCorpus* corpus_;
    ByteCorpus::Range range_;
    int window_;
    std::vector<ByteCorpus::Range> regions_;
    std::vector<std::size_t> pos_;
    std::size_t epochs_ = 0;
};

/// Deterministic English-like text used as a stand-in corpus: Zipf-weighted
/// words with preferred successors, sentence casing, punctuation, paragraphs.
inline std::vector<std::uint8_t> synthetic_text(std::size_t n_bytes, std::uint64_t seed) {
    static constexpr std::string_view words[] = {
        "the", "of", "and", "to", "in", "a", "is", "that", "for", "it", "as", "was", "with", "be", "by", "on",
        "not", "he", "this", "are", "or", "his", "from", "at", "which", "but", "have", "an", "had", "they",
        "you", "were", "their", "one", "all", "we", "can", "her", "has", "there", "been", "if", "more", "when",
        "will", "would", "who", "so", "no", "she", "other", "its", "may", "these", "about", "than", "into",
        "some", "could", "them", "only", "time", "new", "first", "also", "two", "any", "like", "such", "then",
        "what", "over", "most", "many", "made", "after", "between", "world", "city", "music", "history",
        "system", "language", "people", "number", "water", "state", "river", "known", "during", "century",
        "government", "later", "under", "found", "used", "form", "part", "called", "each", "several", "small",
        "large", "early", "since", "island", "north", "south", "church", "school", "war", "work", "film",
        "series", "album", "species", "family", "group", "population", "area", "national", "university",
        "season", "team", "league", "game", "player", "record", "station", "line", "road", "village", "town",
        "county", "district", "region", "country", "empire", "king", "army", "battle", "theory", "energy",
        "light", "computer", "program", "data", "network", "model", "design", "science", "research", "field",
    };
    constexpr std::size_t n_words = std::size(words);
    Rng rng(seed);
    // Zipf weights and per-word favoured successors.
    std::vector<double> cum(n_words);
    double total = 0.0;
    for (std::size_t i = 0; i < n_words; ++i) {
        total += 1.0 / static_cast<double>(i + 1);
        cum[i] = total;
    }
    auto zipf = [&]() {
        const double u = rng.uniform() * total;
        return static_cast<std::size_t>(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    };
    std::vector<std::array<std::size_t, 3>> succ(n_words);
    for (auto& s : succ)
        for (auto& x : s) x = zipf();

    std::vector<std::uint8_t> out;
    out.reserve(n_bytes + 64);
    std::size_t prev = zipf();
    bool sentence_start = true;
    int words_in_sentence = 0, sentences_in_par = 0;
    while (out.size() < n_bytes) {
        const std::size_t w = rng.uniform() < 0.5 ? succ[prev][rng.below(3)] : zipf();
        std::string token(words[w]);
        if (sentence_start) token[0] = static_cast<char>(token[0] - 'a' + 'A');
        if (!sentence_start) out.push_back(' ');
        out.insert(out.end(), token.begin(), token.end());
        sentence_start = false;
        prev = w;
        ++words_in_sentence;
        if (words_in_sentence > 4 && rng.uniform() < 0.12) {
            out.push_back('.');
            words_in_sentence = 0;
            sentence_start = true;
            ++sentences_in_par;
            if (sentences_in_par > 3 && rng.uniform() < 0.25) {
                out.push_back('\n');
                sentences_in_par = 0;
            } else {
                out.push_back(' ');
            }
        } else if (words_in_sentence > 2 && rng.uniform() < 0.05) {
            out.push_back(',');
        }
    }
    out.resize(n_bytes);
    return out;
}

}  // namespace elmnet::tasks
