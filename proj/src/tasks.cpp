#include "indrnn/tasks.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <utility>

namespace indrnn {

AddingBatch gen_adding_batch(Rng& rng, Index t_len, Index batch) {
  if (t_len < 2) throw ConfigError("gen_adding_batch: sequence length must be >= 2");
  if (batch < 1) throw ConfigError("gen_adding_batch: batch must be >= 1");

  AddingBatch out;
  out.x.resize(t_len, batch, 2);
  out.x.set_zero();
  out.y.resize(batch);

  const Index half = t_len / 2;
  for (Index b = 0; b < batch; ++b) {
    for (Index t = 0; t < t_len; ++t) out.x.at(t, b, 0) = rng.next_unit();
    const Index first = static_cast<Index>(rng.below(static_cast<std::uint64_t>(half)));
    const Index second =
        half + static_cast<Index>(rng.below(static_cast<std::uint64_t>(t_len - half)));
    out.x.at(first, b, 1) = 1.0;
    out.x.at(second, b, 1) = 1.0;
    out.y[b] = out.x.at(first, b, 0) + out.x.at(second, b, 0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// IDX ingestion. gzread handles both plain and gzip files, so one reader
// covers the compressed variants; offsets reported are positions in the
// decompressed stream.

namespace {

class GzReader {
 public:
  explicit GzReader(const std::string& path) : path_(path) {
    file_ = gzopen(path.c_str(), "rb");
    if (!file_) throw FormatError("cannot open '" + path + "'", 0);
  }
  ~GzReader() {
    if (file_) gzclose(file_);
  }
  GzReader(const GzReader&) = delete;
  GzReader& operator=(const GzReader&) = delete;

  void read(void* dst, std::size_t n, const std::string& what) {
    const int got = gzread(file_, dst, static_cast<unsigned>(n));
    if (got < 0 || static_cast<std::size_t>(got) != n)
      throw FormatError("'" + path_ + "': truncated while reading " + what, offset_);
    offset_ += n;
  }

  std::uint32_t read_u32_be(const std::string& what) {
    std::uint8_t b[4];
    read(b, 4, what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
  }

  bool at_eof() {
    std::uint8_t probe;
    return gzread(file_, &probe, 1) <= 0;
  }

  std::size_t offset() const { return offset_; }

 private:
  std::string path_;
  gzFile file_ = nullptr;
  std::size_t offset_ = 0;
};

}  // namespace

IdxFile read_idx(const std::string& path) {
  GzReader in(path);
  IdxFile out;
  out.magic = in.read_u32_be("magic");
  if ((out.magic >> 16) != 0 || ((out.magic >> 8) & 0xFF) != 0x08)
    throw FormatError("'" + path + "': bad magic 0x" + [&] {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%08X", out.magic);
      return std::string(buf);
    }(), 0);
  const Index ndims = out.magic & 0xFF;
  if (ndims < 1 || ndims > 4)
    throw FormatError("'" + path + "': unsupported dimension count " +
                      std::to_string(ndims), 3);

  std::size_t total = 1;
  for (Index d = 0; d < ndims; ++d) {
    const std::uint32_t v = in.read_u32_be("dimension " + std::to_string(d));
    out.dims.push_back(static_cast<Index>(v));
    total *= v;
  }
  out.bytes.resize(total);
  if (total > 0) in.read(out.bytes.data(), total, "payload");
  if (!in.at_eof())
    throw FormatError("'" + path + "': trailing data after payload", in.offset());
  return out;
}

PixelDataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const IdxFile img = read_idx(images_path);
  if (img.magic != 0x00000803u)
    throw FormatError("'" + images_path + "': expected image magic 0x00000803", 0);
  const IdxFile lab = read_idx(labels_path);
  if (lab.magic != 0x00000801u)
    throw FormatError("'" + labels_path + "': expected label magic 0x00000801", 0);
  if (img.dims[0] != lab.dims[0])
    throw FormatError("image/label counts differ: " + std::to_string(img.dims[0]) +
                          " vs " + std::to_string(lab.dims[0]), 4);

  PixelDataset ds;
  ds.count = img.dims[0];
  ds.height = img.dims[1];
  ds.width = img.dims[2];
  ds.images = img.bytes;
  ds.labels = lab.bytes;
  for (std::size_t i = 0; i < ds.labels.size(); ++i)
    if (ds.labels[i] >= 10)
      throw FormatError("'" + labels_path + "': label " + std::to_string(ds.labels[i]) +
                            " is not a digit class", 8 + i);
  return ds;
}

Vec pixelize(const PixelDataset& ds, Index index) {
  if (index < 0 || index >= ds.count)
    throw ShapeError("pixelize: index " + std::to_string(index) + " out of range");
  const Index n = ds.height * ds.width;
  const std::uint8_t* img = ds.images.data() + index * n;
  Vec out(n);
  for (Index j = 0; j < n; ++j) {
    const Index src = ds.permutation.empty() ? j : ds.permutation[static_cast<std::size_t>(j)];
    out[j] = static_cast<double>(img[src]) / 255.0;
  }
  return out;
}

void pixel_batch(const PixelDataset& ds, const std::vector<Index>& rows,
                 SequenceBatch& x, std::vector<int>& labels) {
  const Index n = ds.height * ds.width;
  const Index batch = static_cast<Index>(rows.size());
  require_shape(batch >= 1, "pixel_batch: empty row selection");
  x.resize(n, batch, 1);
  labels.resize(static_cast<std::size_t>(batch));
  for (Index b = 0; b < batch; ++b) {
    const Index idx = rows[static_cast<std::size_t>(b)];
    if (idx < 0 || idx >= ds.count) throw ShapeError("pixel_batch: row out of range");
    const std::uint8_t* img = ds.images.data() + idx * n;
    for (Index t = 0; t < n; ++t) {
      const Index src = ds.permutation.empty() ? t : ds.permutation[static_cast<std::size_t>(t)];
      x.at(t, b, 0) = static_cast<double>(img[src]) / 255.0;
    }
    labels[static_cast<std::size_t>(b)] = ds.labels[static_cast<std::size_t>(idx)];
  }
}

std::vector<Index> make_permutation(Rng& rng, Index n) {
  if (n < 1) throw ConfigError("make_permutation: n must be >= 1");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (Index i = n - 1; i > 0; --i) {
    const Index j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  return perm;
}

// ---------------------------------------------------------------------------
// Corpus handling.

CharCorpus make_corpus(const std::vector<std::uint8_t>& bytes, double train_frac,
                       double valid_frac) {
  if (bytes.empty()) throw ConfigError("corpus is empty");
  if (!(train_frac > 0) || train_frac > 1 || valid_frac < 0 || train_frac + valid_frac > 1)
    throw ConfigError("corpus split fractions out of range");

  CharCorpus c;
  const Index n = static_cast<Index>(bytes.size());
  c.train_end = static_cast<Index>(static_cast<double>(n) * train_frac);
  c.valid_end = c.train_end + static_cast<Index>(static_cast<double>(n) * valid_frac);
  if (c.train_end < 1) throw ConfigError("corpus train split is empty");

  bool seen[256] = {};
  for (Index i = 0; i < c.train_end; ++i) seen[bytes[static_cast<std::size_t>(i)]] = true;
  c.byte_to_id.fill(-1);
  for (int v = 0; v < 256; ++v) {
    if (!seen[v]) continue;
    c.byte_to_id[static_cast<std::size_t>(v)] = static_cast<std::int32_t>(c.id_to_byte.size());
    c.id_to_byte.push_back(static_cast<std::uint8_t>(v));
  }
  c.unk_id = static_cast<std::int32_t>(c.id_to_byte.size());
  c.id_to_byte.push_back('?');
  c.vocab = static_cast<Index>(c.id_to_byte.size());

  c.ids.resize(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const std::int32_t id = c.byte_to_id[bytes[i]];
    c.ids[i] = id < 0 ? c.unk_id : id;
  }
  return c;
}

CharCorpus load_corpus(const std::string& path, double train_frac, double valid_frac) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open corpus '" + path + "'", 0);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.empty()) throw FormatError("corpus '" + path + "' is empty", 0);
  return make_corpus(bytes, train_frac, valid_frac);
}

namespace {

std::pair<Index, Index> split_range(const CharCorpus& c, Split split) {
  switch (split) {
    case Split::Train: return {0, c.train_end};
    case Split::Valid: return {c.train_end, c.valid_end};
    case Split::Test: return {c.valid_end, static_cast<Index>(c.ids.size())};
  }
  return {0, 0};
}

}  // namespace

double order0_entropy_bits(const CharCorpus& corpus, Split split) {
  const auto [begin, end] = split_range(corpus, split);
  if (end <= begin) throw ConfigError("order0_entropy_bits: split is empty");
  std::vector<double> counts(static_cast<std::size_t>(corpus.vocab), 0.0);
  for (Index i = begin; i < end; ++i)
    counts[static_cast<std::size_t>(corpus.ids[static_cast<std::size_t>(i)])] += 1.0;
  const double total = static_cast<double>(end - begin);
  double h = 0.0;
  for (double cnt : counts) {
    if (cnt == 0.0) continue;
    const double p = cnt / total;
    h -= p * std::log2(p);
  }
  return h;
}

LmBatcher::LmBatcher(const CharCorpus& corpus, Split split, Index t_len, Index batch)
    : ids_(&corpus.ids), t_len_(t_len), batch_(batch) {
  if (t_len < 1 || batch < 1) throw ConfigError("batch_lm: T and B must be >= 1");
  const auto [begin, end] = split_range(corpus, split);
  begin_ = begin;
  const Index len = end - begin;
  stream_len_ = len / batch;
  if (stream_len_ < t_len + 1)
    throw ConfigError("batch_lm: split of " + std::to_string(len) +
                      " ids is shorter than B*(T+1) = " +
                      std::to_string(batch * (t_len + 1)));
  batches_ = (stream_len_ - 1) / t_len;
}

void LmBatcher::fill(Index k, IdMat& inputs, IdMat& targets) const {
  if (k < 0 || k >= batches_) throw ShapeError("batch_lm: batch index out of range");
  inputs.resize(t_len_, batch_);
  targets.resize(t_len_, batch_);
  for (Index b = 0; b < batch_; ++b) {
    const Index base = begin_ + b * stream_len_ + k * t_len_;
    for (Index t = 0; t < t_len_; ++t) {
      inputs(t, b) = (*ids_)[static_cast<std::size_t>(base + t)];
      targets(t, b) = (*ids_)[static_cast<std::size_t>(base + t + 1)];
    }
  }
}

std::pair<IdMat, IdMat> batch_lm(const CharCorpus& corpus, Split split, Index t_len,
                                 Index batch, Index k) {
  LmBatcher batcher(corpus, split, t_len, batch);
  std::pair<IdMat, IdMat> out;
  batcher.fill(k, out.first, out.second);
  return out;
}

}  // namespace indrnn
