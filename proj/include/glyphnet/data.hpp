#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "glyphnet/image_io.hpp"
#include "glyphnet/rng.hpp"
#include "glyphnet/tensor.hpp"

namespace glyphnet {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One grayscale sample: ink bright (1.0) on zero background, label in [0,K).
struct LabeledImage {
  Tensor<float> pixels;  // (1,H,W), values in [0,1]
  int label = 0;
  std::string source_id;
};

struct DatasetSplit {
  std::vector<LabeledImage> train, test;
  std::vector<std::string> class_names;
  std::uint64_t seed = 0;
};

/// Sampling ranges for the per-sample affine jitter. Shear is the
/// off-diagonal affine factor; zoom scales in [1-z, 1+z]; shifts are
/// fractions of width/height.
struct AugmentConfig {
  double rotation_deg = 10.0;
  double shear_frac = 0.10;
  double zoom_frac = 0.10;
  double shift_frac = 0.10;
  bool enabled = true;

  void validate() const {
    if (rotation_deg < 0 || shear_frac < 0 || zoom_frac < 0 || shift_frac < 0)
      throw std::invalid_argument("augmentation ranges must be nonnegative");
  }
};

/// A concrete sampled transform: rotate by theta, shear, scale by zoom about
/// the image center, then shift by (tx, ty) pixels.
struct AffineParams {
  double theta_rad = 0.0;
  double shear = 0.0;
  double zoom = 1.0;
  double tx = 0.0;
  double ty = 0.0;

  bool is_identity() const {
    return theta_rad == 0.0 && shear == 0.0 && zoom == 1.0 && tx == 0.0 && ty == 0.0;
  }
};

inline AffineParams sample_affine(const AugmentConfig& cfg, Rng& rng, int w, int h) {
  cfg.validate();
  AffineParams p;
  constexpr double kDegToRad = 0.017453292519943295;
  p.theta_rad = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg) * kDegToRad;
  p.shear = rng.uniform(-cfg.shear_frac, cfg.shear_frac);
  p.zoom = rng.uniform(1.0 - cfg.zoom_frac, 1.0 + cfg.zoom_frac);
  p.tx = rng.uniform(-cfg.shift_frac, cfg.shift_frac) * w;
  p.ty = rng.uniform(-cfg.shift_frac, cfg.shift_frac) * h;
  return p;
}

/// Resample an image through the affine map dst = R(theta)*Sh*Sc*(src-c)+c+t,
/// where c is the pixel-center of the image. Implemented by walking output
/// pixels through the analytic inverse with bilinear interpolation;
/// out-of-bounds reads are background (0). An identity transform returns the
/// input bit-for-bit.
inline Tensor<float> apply_affine(const Tensor<float>& img, const AffineParams& p) {
  if (img.rank() != 3 || img.dim(0) != 1)
    throw ShapeError("apply_affine expects (1,H,W), got " + shape_str(img.shape()));
  if (p.zoom <= 0) throw std::invalid_argument("zoom must be positive");
  if (p.is_identity()) return img;
  const int h = img.dim(1), w = img.dim(2);
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const double cth = std::cos(p.theta_rad), sth = std::sin(p.theta_rad);
  Tensor<float> out({1, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      // Inverse map: undo shift+center, rotation, shear, then zoom.
      const double dx = x - cx - p.tx, dy = y - cy - p.ty;
      const double rx = cth * dx + sth * dy;
      const double ry = -sth * dx + cth * dy;
      const double hx = rx - p.shear * ry;  // inverse of x += shear*y
      const double hy = ry;
      const double sx = hx / p.zoom + cx;
      const double sy = hy / p.zoom + cy;
      const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      auto at = [&](int yy, int xx) -> double {
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
        return static_cast<double>(img[static_cast<std::int64_t>(yy) * w + xx]);
      };
      const double v = at(y0, x0) * (1 - fy) * (1 - fx) + at(y0, x0 + 1) * (1 - fy) * fx +
                       at(y0 + 1, x0) * fy * (1 - fx) + at(y0 + 1, x0 + 1) * fy * fx;
      out[static_cast<std::int64_t>(y) * w + x] = static_cast<float>(v);
    }
  return out;
}

/// Draw one jittered copy of a sample. Label and shape never change.
inline LabeledImage augment(const LabeledImage& img, const AugmentConfig& cfg, Rng& rng) {
  LabeledImage out;
  out.label = img.label;
  out.source_id = img.source_id;
  out.pixels = apply_affine(img.pixels, sample_affine(cfg, rng, img.pixels.dim(2),
                                                      img.pixels.dim(1)));
  return out;
}

/// Read a class-per-directory corpus: root/<class>/<file>.png|jpg|pgm.
/// Classes are ordered lexicographically by directory name. Images are
/// grayscale in [0,1], polarity-normalized so ink is bright, and resized to
/// image_size x image_size with aspect-preserving padding. Undecodable files
/// are skipped and counted in *skipped; an empty class directory is an error.
inline std::vector<LabeledImage> load_corpus(const std::filesystem::path& root, int image_size,
                                             std::vector<std::string>& class_names,
                                             int* skipped = nullptr) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DataError("corpus root is not a directory: " + root.string());
  std::map<std::string, std::vector<fs::path>> classes;  // lexicographic by key
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    auto& files = classes[entry.path().filename().string()];
    for (const auto& f : fs::directory_iterator(entry.path()))
      if (f.is_regular_file()) files.push_back(f.path());
    std::sort(files.begin(), files.end());
  }
  if (classes.empty()) throw DataError("no class directories under " + root.string());

  class_names.clear();
  std::vector<LabeledImage> images;
  int skip_count = 0;
  int label = 0;
  for (const auto& [name, files] : classes) {
    class_names.push_back(name);
    size_t loaded = 0;
    for (const auto& path : files) {
      Tensor<float> px;
      try {
        px = read_image_gray(path);
      } catch (const ImageError&) {
        ++skip_count;
        continue;
      }
      // Ink-bright polarity: a mostly-bright image is dark-on-light; flip it.
      double mean = 0.0;
      for (std::int64_t i = 0; i < px.numel(); ++i) mean += px[i];
      mean /= static_cast<double>(px.numel());
      if (mean > 0.5)
        for (std::int64_t i = 0; i < px.numel(); ++i) px[i] = 1.0f - px[i];
      LabeledImage li;
      li.pixels = resize_pad(px, image_size);
      li.label = label;
      li.source_id = path.lexically_relative(root).string();
      images.push_back(std::move(li));
      ++loaded;
    }
    if (loaded == 0)
      throw DataError("class directory '" + name + "' contributed no readable images");
    ++label;
  }
  if (skipped) *skipped = skip_count;
  return images;
}

/// Per-class stratified shuffle split. Each class keeps
/// clamp(floor(n*train_frac), 1, n-1) samples for training, so both sides of
/// every class are nonempty; classes with fewer than 2 samples are an error.
inline DatasetSplit split_dataset(std::vector<LabeledImage> images,
                                  std::vector<std::string> class_names, double train_frac,
                                  std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw std::invalid_argument("train fraction must be in (0,1)");
  const int k = static_cast<int>(class_names.size());
  std::vector<std::vector<size_t>> by_class(static_cast<size_t>(k));
  for (size_t i = 0; i < images.size(); ++i) {
    const int lb = images[i].label;
    if (lb < 0 || lb >= k) throw DataError("label " + std::to_string(lb) + " out of range");
    by_class[static_cast<size_t>(lb)].push_back(i);
  }
  DatasetSplit out;
  out.class_names = std::move(class_names);
  out.seed = seed;
  for (int c = 0; c < k; ++c) {
    auto& idx = by_class[static_cast<size_t>(c)];
    const size_t n = idx.size();
    if (n < 2)
      throw DataError("class '" + out.class_names[static_cast<size_t>(c)] + "' has " +
                      std::to_string(n) + " samples; need at least 2 to split");
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c), 0xdeca));
    rng.shuffle(idx);
    const auto train_n = static_cast<size_t>(std::clamp<std::int64_t>(
        static_cast<std::int64_t>(std::floor(static_cast<double>(n) * train_frac + 1e-9)), 1,
        static_cast<std::int64_t>(n) - 1));
    for (size_t i = 0; i < n; ++i)
      (i < train_n ? out.train : out.test).push_back(images[idx[i]]);
  }
  return out;
}

template <typename Real>
struct Batch {
  Tensor<Real> x;  // (B,1,H,W)
  std::vector<int> labels;
};

/// Materialize one epoch: a seeded shuffle of the training set, cut into
/// batches of `batch_size` (final short batch kept), each sample optionally
/// augmented by its own RNG derived from (seed, epoch, stream position) —
/// the stream is identical however the work is scheduled.
template <typename Real>
std::vector<Batch<Real>> epoch_batches(const std::vector<LabeledImage>& train, int batch_size,
                                       const AugmentConfig& cfg, std::uint64_t seed,
                                       int epoch) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (train.empty()) throw DataError("empty training set");
  const int h = train[0].pixels.dim(1), w = train[0].pixels.dim(2);
  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle_rng(derive_seed(seed, static_cast<std::uint64_t>(epoch), 0x0bd5));
  shuffle_rng.shuffle(order);

  std::vector<Batch<Real>> batches;
  for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
    const int b = static_cast<int>(std::min(order.size() - start,
                                            static_cast<size_t>(batch_size)));
    Batch<Real> batch;
    batch.x = Tensor<Real>({b, 1, h, w});
    batch.labels.resize(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) {
      const LabeledImage& src = train[order[start + static_cast<size_t>(i)]];
      if (src.pixels.dim(1) != h || src.pixels.dim(2) != w)
        throw DataError("inconsistent image sizes in training set");
      const Tensor<float>* px = &src.pixels;
      Tensor<float> augmented;
      if (cfg.enabled) {
        Rng sample_rng(derive_seed(seed, static_cast<std::uint64_t>(epoch),
                                   0x40000000ull + start + static_cast<size_t>(i)));
        augmented = apply_affine(src.pixels, sample_affine(cfg, sample_rng, w, h));
        px = &augmented;
      }
      Real* dst = batch.x.data() + static_cast<std::int64_t>(i) * h * w;
      for (std::int64_t j = 0; j < static_cast<std::int64_t>(h) * w; ++j)
        dst[j] = static_cast<Real>((*px)[j]);
      batch.labels[static_cast<size_t>(i)] = src.label;
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

/// Assemble an unaugmented (B,1,H,W) tensor from a contiguous range.
template <typename Real>
Batch<Real> to_batch(const std::vector<LabeledImage>& items, size_t start, size_t count) {
  const int h = items[start].pixels.dim(1), w = items[start].pixels.dim(2);
  Batch<Real> batch;
  batch.x = Tensor<Real>({static_cast<int>(count), 1, h, w});
  batch.labels.resize(count);
  for (size_t i = 0; i < count; ++i) {
    const auto& px = items[start + i].pixels;
    if (px.dim(1) != h || px.dim(2) != w) throw DataError("inconsistent image sizes");
    Real* dst = batch.x.data() + static_cast<std::int64_t>(i) * h * w;
    for (std::int64_t j = 0; j < static_cast<std::int64_t>(h) * w; ++j)
      dst[j] = static_cast<Real>(px[j]);
    batch.labels[i] = items[start + i].label;
  }
  return batch;
}

}  // namespace glyphnet
