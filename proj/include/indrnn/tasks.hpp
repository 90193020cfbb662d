#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "indrnn/rng.hpp"
#include "indrnn/types.hpp"

namespace indrnn {

// ---------------------------------------------------------------------------
// Adding problem: regress the sum of the two marked entries of a long random
// sequence.

struct AddingBatch {
  SequenceBatch x;  // T x B x 2: channel 0 values, channel 1 marker
  Vec y;            // B targets, each the sum of the two marked values
};

// Fresh batch per call. Values ~ U(0,1); one marker lands uniformly in the
// first half of the sequence, the other in the second half.
AddingBatch gen_adding_batch(Rng& rng, Index t_len, Index batch);

// ---------------------------------------------------------------------------
// Pixel-sequence classification.

struct PixelDataset {
  Index count = 0;
  Index height = 0;
  Index width = 0;
  std::vector<std::uint8_t> images;  // count * height * width, row-major
  std::vector<std::uint8_t> labels;  // count entries, values < 10
  std::vector<Index> permutation;    // empty = natural scan order
};

// Raw IDX payload: magic-validated big-endian header plus byte data.
// Accepts gzip-compressed files transparently.
struct IdxFile {
  std::uint32_t magic = 0;
  std::vector<Index> dims;
  std::vector<std::uint8_t> bytes;
};

IdxFile read_idx(const std::string& path);

// Pairs an image file (magic 0x00000803) with a label file (0x00000801),
// checks counts agree and labels are digit classes.
PixelDataset load_idx(const std::string& images_path, const std::string& labels_path);

// One image as a (H*W) x 1 feature column in [0,1]; output position j reads
// input pixel permutation[j] when a permutation is set.
Vec pixelize(const PixelDataset& ds, Index index);

// Batch form of pixelize for the given dataset rows.
void pixel_batch(const PixelDataset& ds, const std::vector<Index>& rows,
                 SequenceBatch& x, std::vector<int>& labels);

// Fisher-Yates shuffle of 0..n-1.
std::vector<Index> make_permutation(Rng& rng, Index n);

// ---------------------------------------------------------------------------
// Byte-level language modeling.

struct CharCorpus {
  std::vector<std::int32_t> ids;
  Index vocab = 0;  // includes the reserved unknown id
  std::int32_t unk_id = 0;
  std::array<std::int32_t, 256> byte_to_id{};
  std::vector<std::uint8_t> id_to_byte;
  // Split boundaries: train [0, train_end), valid [train_end, valid_end),
  // test [valid_end, size).
  Index train_end = 0;
  Index valid_end = 0;
};

enum class Split { Train, Valid, Test };

// Vocabulary comes from the train split's distinct bytes plus one unknown
// slot; valid/test bytes never seen in train map to the unknown id.
CharCorpus make_corpus(const std::vector<std::uint8_t>& bytes, double train_frac,
                       double valid_frac);
CharCorpus load_corpus(const std::string& path, double train_frac = 0.9,
                       double valid_frac = 0.05);

// Zeroth-order (unigram) entropy of a split, in bits per byte; the floor any
// context-free predictor can reach on that split.
double order0_entropy_bits(const CharCorpus& corpus, Split split);

// Truncated-backprop batch layout: the split is cut into B contiguous
// streams; batch k covers positions [k*T, (k+1)*T) of every stream and
// targets are the inputs shifted one position ahead.
class LmBatcher {
 public:
  LmBatcher(const CharCorpus& corpus, Split split, Index t_len, Index batch);
  Index batches_per_epoch() const { return batches_; }
  void fill(Index k, IdMat& inputs, IdMat& targets) const;

 private:
  const std::vector<std::int32_t>* ids_;
  Index begin_ = 0;
  Index stream_len_ = 0;
  Index t_len_ = 0;
  Index batch_ = 0;
  Index batches_ = 0;
};

// Single-call form of the batcher.
std::pair<IdMat, IdMat> batch_lm(const CharCorpus& corpus, Split split, Index t_len,
                                 Index batch, Index k);

}  // namespace indrnn
