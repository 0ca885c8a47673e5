#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "longred/rng.hpp"

namespace longred {

// Byte-level (vocab 256, lossless) or character-level (explicit alphabet)
// tokenization.
class Tokenizer {
  public:
    enum class Mode { bytes, chars };

    static Tokenizer byte_level();
    static Tokenizer char_level(std::string alphabet);

    Mode mode() const { return mode_; }
    int vocab() const;
    std::vector<std::int32_t> encode(std::string_view text) const;
    std::string decode(std::span<const std::int32_t> ids) const;

  private:
    Tokenizer() = default;
    Mode mode_ = Mode::bytes;
    std::string alphabet_;
    std::array<std::int16_t, 256> to_id_{};
};

struct PackedDataset {
    std::string name;  // D1 | D2 | D3
    int sequence_length = 0;
    int vocab = 0;
    std::vector<std::vector<std::int32_t>> sequences;
    std::uint64_t digest = 0;

    std::size_t count() const { return sequences.size(); }
};

// Consecutive non-overlapping windows; the final partial window is dropped.
PackedDataset pack_corpus(std::span<const std::int32_t> tokens, int sequence_length,
                          std::string name, int vocab);

// Flat little-endian int32 token array at `path` plus a `<path>.meta` text
// sidecar (name, length, count, vocab, digest).
void save_dataset(const PackedDataset& ds, const std::filesystem::path& path);
PackedDataset load_dataset(const std::filesystem::path& path);

struct TrainBatch {
    std::vector<std::vector<std::int32_t>> d1, d2, d3;
    std::int64_t tokens_d1() const;
    std::int64_t tokens_d2() const;
    std::int64_t tokens_d3() const;
};

// Draws per-step batches with token counts proportional to the mix ratio,
// sampling each dataset without replacement per epoch (reshuffled between
// epochs). Datasets may be null when their ratio is zero; `skip` reserves a
// per-dataset prefix (e.g. a probe batch) that is never drawn.
class BatchSampler {
  public:
    BatchSampler(const PackedDataset* d1, const PackedDataset* d2, const PackedDataset* d3,
                 std::array<double, 3> mix_ratio, std::int64_t batch_tokens, Rng& rng,
                 std::array<std::size_t, 3> skip = {0, 0, 0});

    TrainBatch next();
    std::array<int, 3> per_step_counts() const { return counts_; }

  private:
    struct Stream {
        const PackedDataset* data = nullptr;
        std::size_t skip = 0;
        std::vector<std::size_t> order;
        std::size_t cursor = 0;
    };
    void refill(Stream& s);
    std::vector<std::vector<std::int32_t>> take(Stream& s, int n);

    std::array<Stream, 3> streams_;
    std::array<int, 3> counts_{};
    Rng* rng_;
};

// Seeded synthetic text: low-entropy Markov word chains with embedded
// key-value recall pairs ("@xy:ab;" bound earlier, "?xy:ab;" queried later)
// at both short and long ranges so context extension has a measurable signal.
struct SyntheticSpec {
    std::uint64_t seed = 1;
    std::size_t target_bytes = 1 << 20;
    int recall_period = 150;   // approx filler bytes between new pairs
    int short_gap_min = 10, short_gap_max = 40;
    int long_gap_min = 100, long_gap_max = 200;
    double long_fraction = 0.5;
};

std::string generate_corpus(const SyntheticSpec& spec);

// A fixed-length sequence with a binding early and the query near the end;
// value_positions index the query's value bytes (predicted from the prefix).
struct RecallCase {
    std::vector<std::int32_t> tokens;
    std::vector<std::size_t> value_positions;
};

std::vector<RecallCase> make_recall_cases(int length, int count, int min_gap,
                                          std::uint64_t seed);

}  // namespace longred
