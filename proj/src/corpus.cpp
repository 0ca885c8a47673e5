#include "longred/corpus.hpp"

#include <algorithm>
#include <cstring>
#include <deque>
#include <fstream>
#include <map>

#include "longred/digest.hpp"
#include "longred/errors.hpp"

namespace longred {

// ---------------------------------------------------------------- tokenizer

Tokenizer Tokenizer::byte_level() {
    Tokenizer t;
    t.mode_ = Mode::bytes;
    return t;
}

Tokenizer Tokenizer::char_level(std::string alphabet) {
    if (alphabet.empty()) throw ConfigError("char tokenizer: empty alphabet");
    Tokenizer t;
    t.mode_ = Mode::chars;
    t.to_id_.fill(-1);
    for (const char c : alphabet) {
        const auto b = static_cast<unsigned char>(c);
        if (t.to_id_[b] >= 0) continue;  // duplicates collapse
        t.to_id_[b] = static_cast<std::int16_t>(t.alphabet_.size());
        t.alphabet_.push_back(c);
    }
    return t;
}

int Tokenizer::vocab() const {
    return mode_ == Mode::bytes ? 256 : static_cast<int>(alphabet_.size());
}

std::vector<std::int32_t> Tokenizer::encode(std::string_view text) const {
    std::vector<std::int32_t> ids;
    ids.reserve(text.size());
    for (const char c : text) {
        const auto b = static_cast<unsigned char>(c);
        if (mode_ == Mode::bytes) {
            ids.push_back(static_cast<std::int32_t>(b));
        } else {
            if (to_id_[b] < 0)
                throw ConfigError("char tokenizer: character outside vocabulary");
            ids.push_back(to_id_[b]);
        }
    }
    return ids;
}

std::string Tokenizer::decode(std::span<const std::int32_t> ids) const {
    std::string out;
    out.reserve(ids.size());
    for (const auto id : ids) {
        if (id < 0 || id >= vocab()) throw ConfigError("decode: id out of range");
        out.push_back(mode_ == Mode::bytes ? static_cast<char>(id) : alphabet_[static_cast<std::size_t>(id)]);
    }
    return out;
}

// ---------------------------------------------------------------- packing

namespace {

std::uint64_t dataset_digest(int sequence_length,
                             const std::vector<std::vector<std::int32_t>>& sequences) {
    Fnv1a64 h;
    const auto len32 = static_cast<std::uint32_t>(sequence_length);
    h.update(&len32, sizeof(len32));
    for (const auto& seq : sequences)
        h.update(seq.data(), seq.size() * sizeof(std::int32_t));
    return h.value();
}

void validate_name(const std::string& name) {
    if (name != "D1" && name != "D2" && name != "D3")
        throw ConfigError("dataset name must be one of D1, D2, D3");
}

}  // namespace

PackedDataset pack_corpus(std::span<const std::int32_t> tokens, int sequence_length,
                          std::string name, int vocab) {
    validate_name(name);
    if (sequence_length < 2) throw ConfigError("pack: sequence length must be >= 2");
    if (tokens.size() < static_cast<std::size_t>(sequence_length))
        throw ConfigError("pack: corpus shorter than one window");
    for (const auto t : tokens)
        if (t < 0 || t >= vocab) throw ConfigError("pack: token id outside vocabulary");

    PackedDataset ds;
    ds.name = std::move(name);
    ds.sequence_length = sequence_length;
    ds.vocab = vocab;
    const std::size_t windows = tokens.size() / static_cast<std::size_t>(sequence_length);
    ds.sequences.reserve(windows);
    for (std::size_t w = 0; w < windows; ++w) {
        const auto* begin = tokens.data() + w * static_cast<std::size_t>(sequence_length);
        ds.sequences.emplace_back(begin, begin + sequence_length);
    }
    ds.digest = dataset_digest(sequence_length, ds.sequences);
    return ds;
}

void save_dataset(const PackedDataset& ds, const std::filesystem::path& path) {
    std::ofstream bin(path, std::ios::binary | std::ios::trunc);
    if (!bin) throw IoError("cannot write dataset: " + path.string());
    for (const auto& seq : ds.sequences)
        bin.write(reinterpret_cast<const char*>(seq.data()),
                  static_cast<std::streamsize>(seq.size() * sizeof(std::int32_t)));
    if (!bin) throw IoError("short write: " + path.string());
    bin.close();

    std::ofstream meta(path.string() + ".meta", std::ios::trunc);
    if (!meta) throw IoError("cannot write dataset sidecar: " + path.string() + ".meta");
    meta << "name=" << ds.name << "\n"
         << "sequence_length=" << ds.sequence_length << "\n"
         << "count=" << ds.sequences.size() << "\n"
         << "vocab=" << ds.vocab << "\n"
         << "digest=" << hex64(ds.digest) << "\n";
    if (!meta) throw IoError("short write: " + path.string() + ".meta");
}

PackedDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream meta(path.string() + ".meta");
    if (!meta) throw IoError("missing dataset sidecar: " + path.string() + ".meta");
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(meta, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError("bad sidecar line: " + line);
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    for (const char* key : {"name", "sequence_length", "count", "vocab", "digest"})
        if (!kv.count(key)) throw IoError(std::string("sidecar missing key: ") + key);

    PackedDataset ds;
    ds.name = kv["name"];
    validate_name(ds.name);
    ds.sequence_length = std::stoi(kv["sequence_length"]);
    ds.vocab = std::stoi(kv["vocab"]);
    const auto count = static_cast<std::size_t>(std::stoull(kv["count"]));
    const auto want_digest = parse_hex64(kv["digest"]);

    std::ifstream bin(path, std::ios::binary);
    if (!bin) throw IoError("missing dataset payload: " + path.string());
    ds.sequences.assign(count, std::vector<std::int32_t>(
                                   static_cast<std::size_t>(ds.sequence_length)));
    for (auto& seq : ds.sequences) {
        bin.read(reinterpret_cast<char*>(seq.data()),
                 static_cast<std::streamsize>(seq.size() * sizeof(std::int32_t)));
        if (bin.gcount() != static_cast<std::streamsize>(seq.size() * sizeof(std::int32_t)))
            throw IoError("dataset payload truncated: " + path.string());
    }
    ds.digest = dataset_digest(ds.sequence_length, ds.sequences);
    if (ds.digest != want_digest)
        throw IoError("dataset digest mismatch: " + path.string());
    return ds;
}

// ---------------------------------------------------------------- batches

std::int64_t TrainBatch::tokens_d1() const {
    std::int64_t n = 0;
    for (const auto& s : d1) n += static_cast<std::int64_t>(s.size());
    return n;
}
std::int64_t TrainBatch::tokens_d2() const {
    std::int64_t n = 0;
    for (const auto& s : d2) n += static_cast<std::int64_t>(s.size());
    return n;
}
std::int64_t TrainBatch::tokens_d3() const {
    std::int64_t n = 0;
    for (const auto& s : d3) n += static_cast<std::int64_t>(s.size());
    return n;
}

BatchSampler::BatchSampler(const PackedDataset* d1, const PackedDataset* d2,
                           const PackedDataset* d3, std::array<double, 3> mix_ratio,
                           std::int64_t batch_tokens, Rng& rng, std::array<std::size_t, 3> skip)
    : rng_(&rng) {
    const PackedDataset* sets[3] = {d1, d2, d3};
    double ratio_sum = 0.0;
    for (const double r : mix_ratio) {
        if (r < 0.0) throw ConfigError("mix ratio entries must be >= 0");
        ratio_sum += r;
    }
    if (ratio_sum <= 0.0) throw ConfigError("mix ratio must have a positive entry");
    if (d1 && mix_ratio[0] > 0 && batch_tokens < d1->sequence_length)
        throw ConfigError("batch_tokens smaller than one D1 sequence");

    for (int i = 0; i < 3; ++i) {
        streams_[static_cast<std::size_t>(i)].data = sets[i];
        streams_[static_cast<std::size_t>(i)].skip = skip[static_cast<std::size_t>(i)];
        if (mix_ratio[static_cast<std::size_t>(i)] <= 0.0) {
            counts_[static_cast<std::size_t>(i)] = 0;
            continue;
        }
        if (!sets[i])
            throw ConfigError("mix ratio requires dataset D" + std::to_string(i + 1));
        if (sets[i]->count() <= skip[static_cast<std::size_t>(i)])
            throw ConfigError("dataset D" + std::to_string(i + 1) + " has no drawable sequences");
        const double share = static_cast<double>(batch_tokens) *
                             mix_ratio[static_cast<std::size_t>(i)] / ratio_sum;
        const auto n = static_cast<int>(std::llround(share / sets[i]->sequence_length));
        counts_[static_cast<std::size_t>(i)] = std::max(1, n);
    }
}

void BatchSampler::refill(Stream& s) {
    const std::size_t avail = s.data->count() - s.skip;
    s.order.resize(avail);
    for (std::size_t i = 0; i < avail; ++i) s.order[i] = s.skip + i;
    rng_->shuffle(s.order);
    s.cursor = 0;
}

std::vector<std::vector<std::int32_t>> BatchSampler::take(Stream& s, int n) {
    std::vector<std::vector<std::int32_t>> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        if (s.order.empty() || s.cursor >= s.order.size()) refill(s);
        out.push_back(s.data->sequences[s.order[s.cursor++]]);
    }
    return out;
}

TrainBatch BatchSampler::next() {
    TrainBatch b;
    if (counts_[0] > 0) b.d1 = take(streams_[0], counts_[0]);
    if (counts_[1] > 0) b.d2 = take(streams_[1], counts_[1]);
    if (counts_[2] > 0) b.d3 = take(streams_[2], counts_[2]);
    return b;
}

// ---------------------------------------------------------------- synthetic text

namespace {

class WordChain {
  public:
    WordChain(Rng& rng, int words, int successors) : successors_(successors) {
        words_.reserve(static_cast<std::size_t>(words));
        for (int w = 0; w < words; ++w) {
            const auto len = static_cast<int>(rng.uniform_int(3, 7));
            std::string s;
            for (int i = 0; i < len; ++i)
                s.push_back(static_cast<char>('a' + rng.uniform_int(0, 25)));
            words_.push_back(std::move(s));
        }
        next_.resize(words_.size() * static_cast<std::size_t>(successors));
        for (auto& n : next_)
            n = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(words_.size()) - 1));
        current_ = 0;
    }

    const std::string& emit(Rng& rng) {
        // skewed successor choice keeps the text low-entropy and learnable
        const double u = rng.uniform01();
        int pick = successors_ - 1;
        double acc = 0.0;
        for (int i = 0; i < successors_; ++i) {
            acc += weight(i);
            if (u < acc) {
                pick = i;
                break;
            }
        }
        current_ = next_[static_cast<std::size_t>(current_) * successors_ + pick];
        return words_[static_cast<std::size_t>(current_)];
    }

  private:
    double weight(int i) const {
        static constexpr double w[6] = {0.40, 0.25, 0.15, 0.10, 0.06, 0.04};
        return i < 6 ? w[i] : 0.0;
    }
    std::vector<std::string> words_;
    std::vector<int> next_;
    int successors_;
    int current_;
};

struct PendingQuery {
    std::size_t emit_at;
    std::string text;
};

}  // namespace

std::string generate_corpus(const SyntheticSpec& spec) {
    Rng rng(spec.seed, "corpus");
    WordChain chain(rng, 48, 6);

    std::string out;
    out.reserve(spec.target_bytes + 64);
    std::deque<PendingQuery> pending;
    std::size_t last_pair = 0;
    int words_in_sentence = 0;
    int sentence_len = static_cast<int>(rng.uniform_int(5, 11));

    while (out.size() < spec.target_bytes) {
        if (!pending.empty() && out.size() >= pending.front().emit_at) {
            out += pending.front().text;
            pending.pop_front();
            continue;
        }
        if (out.size() - last_pair >= static_cast<std::size_t>(spec.recall_period)) {
            last_pair = out.size();
            std::string key, val;
            key.push_back(static_cast<char>('a' + rng.uniform_int(0, 25)));
            key.push_back(static_cast<char>('a' + rng.uniform_int(0, 25)));
            val.push_back(static_cast<char>('a' + rng.uniform_int(0, 25)));
            val.push_back(static_cast<char>('a' + rng.uniform_int(0, 25)));
            out += "@" + key + ":" + val + "; ";
            const bool long_gap = rng.uniform01() < spec.long_fraction;
            const int gap = long_gap
                                ? static_cast<int>(rng.uniform_int(spec.long_gap_min, spec.long_gap_max))
                                : static_cast<int>(rng.uniform_int(spec.short_gap_min, spec.short_gap_max));
            pending.push_back({out.size() + static_cast<std::size_t>(gap),
                               "?" + key + ":" + val + "; "});
            continue;
        }
        out += chain.emit(rng);
        if (++words_in_sentence >= sentence_len) {
            out += ". ";
            words_in_sentence = 0;
            sentence_len = static_cast<int>(rng.uniform_int(5, 11));
        } else {
            out += " ";
        }
    }
    out.resize(spec.target_bytes);
    return out;
}

std::vector<RecallCase> make_recall_cases(int length, int count, int min_gap,
                                          std::uint64_t seed) {
    if (length < min_gap + 24) throw ConfigError("recall cases: length too small for the gap");
    Rng rng(seed, "recall");
    WordChain chain(rng, 48, 6);
    std::vector<RecallCase> cases;
    cases.reserve(static_cast<std::size_t>(count));

    for (int c = 0; c < count; ++c) {
        std::string key, val;
        key.push_back(static_cast<char>('a' + rng.uniform_int(0, 25)));
        key.push_back(static_cast<char>('a' + rng.uniform_int(0, 25)));
        val.push_back(static_cast<char>('a' + rng.uniform_int(0, 25)));
        val.push_back(static_cast<char>('a' + rng.uniform_int(0, 25)));
        const std::string binding = "@" + key + ":" + val + "; ";
        const std::string query = "?" + key + ":";

        const auto bind_at = static_cast<std::size_t>(rng.uniform_int(4, 16));
        std::string text;
        while (text.size() < bind_at) text += chain.emit(rng) + " ";
        const std::size_t bind_pos = text.size();
        text += binding;
        // value bytes of the binding sit at bind_pos+4, +5; require the
        // query's value bytes to land at least min_gap after them
        const std::size_t earliest = bind_pos + 4 + static_cast<std::size_t>(min_gap);
        const std::size_t query_val_at = std::max(
            earliest, static_cast<std::size_t>(length) - 12);
        if (query_val_at + 4 > static_cast<std::size_t>(length))
            throw ConfigError("recall cases: gap does not fit the length");
        while (text.size() < query_val_at - query.size()) text += chain.emit(rng) + " ";
        text.resize(query_val_at - query.size(), ' ');
        text += query;
        const std::size_t v0 = text.size();
        text += val + "; ";
        while (text.size() < static_cast<std::size_t>(length)) text += chain.emit(rng) + " ";
        text.resize(static_cast<std::size_t>(length));

        RecallCase rc;
        const Tokenizer tok = Tokenizer::byte_level();
        rc.tokens = tok.encode(text);
        rc.value_positions = {v0, v0 + 1};
        cases.push_back(std::move(rc));
    }
    return cases;
}

}  // namespace longred
