#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "glyphnet/data.hpp"
#include "glyphnet/image_io.hpp"
#include "glyphnet/rng.hpp"
#include "glyphnet/tensor.hpp"

namespace glyphnet {

struct ToyParams {
  int classes = 10;
  int per_class = 300;
  int image_size = 32;
  std::uint64_t seed = 7;

  void validate() const {
    if (classes < 2) throw std::invalid_argument("need at least 2 toy classes");
    if (per_class < 1) throw std::invalid_argument("per_class must be >= 1");
    if (image_size < 8) throw std::invalid_argument("toy images need size >= 8");
  }
};

namespace toy {

using Vec2 = std::array<double, 2>;
using Polyline = std::vector<Vec2>;

/// A glyph skeleton: a few strokes in the unit square, each a polyline.
struct Skeleton {
  std::vector<Polyline> strokes;
};

inline double clamp01(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

/// Random stroke: straight segment or circular arc, kept inside the margins.
inline Polyline make_stroke(Rng& rng) {
  Polyline pl;
  if (rng.next_double() < 0.45) {  // arc
    const double cx = rng.uniform(0.30, 0.70), cy = rng.uniform(0.30, 0.70);
    const double r = rng.uniform(0.12, 0.30);
    const double a0 = rng.uniform(0.0, 6.283185307179586);
    const double sweep = rng.uniform(1.9, 5.0) * (rng.next_double() < 0.5 ? -1.0 : 1.0);
    const int segs = 12;
    for (int i = 0; i <= segs; ++i) {
      const double a = a0 + sweep * i / segs;
      pl.push_back({clamp01(cx + r * std::cos(a), 0.08, 0.92),
                    clamp01(cy + r * std::sin(a), 0.08, 0.92)});
    }
  } else {  // line
    const double x0 = rng.uniform(0.15, 0.85), y0 = rng.uniform(0.15, 0.85);
    const double ang = rng.uniform(0.0, 6.283185307179586);
    const double len = rng.uniform(0.30, 0.60);
    pl.push_back({x0, y0});
    pl.push_back({clamp01(x0 + len * std::cos(ang), 0.10, 0.90),
                  clamp01(y0 + len * std::sin(ang), 0.10, 0.90)});
  }
  return pl;
}

inline Skeleton make_skeleton(Rng& rng) {
  Skeleton s;
  const int n = 2 + static_cast<int>(rng.next_below(3));  // 2..4 strokes
  for (int i = 0; i < n; ++i) s.strokes.push_back(make_stroke(rng));
  return s;
}

/// Render strokes as antialiased capsules, max-blended; pixel values in
/// [0,1] quantized to 8 bits so in-memory data matches a PGM write/read
/// roundtrip exactly.
inline Tensor<float> render(const std::vector<Polyline>& strokes, int size, double thickness,
                            double ink) {
  Tensor<float> img({1, size, size});
  const double r = thickness / 2.0;
  for (const auto& pl : strokes) {
    for (size_t i = 0; i + 1 < pl.size(); ++i) {
      const double ax = pl[i][0], ay = pl[i][1], bx = pl[i + 1][0], by = pl[i + 1][1];
      const double vx = bx - ax, vy = by - ay;
      const double vv = vx * vx + vy * vy;
      // Touch only pixels near the segment's bounding box.
      const int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - r - 1)));
      const int x1 = std::min(size - 1, static_cast<int>(std::ceil(std::max(ax, bx) + r + 1)));
      const int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - r - 1)));
      const int y1 = std::min(size - 1, static_cast<int>(std::ceil(std::max(ay, by) + r + 1)));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double px = x - ax, py = y - ay;
          const double t = vv > 0 ? clamp01((px * vx + py * vy) / vv, 0.0, 1.0) : 0.0;
          const double dx = px - t * vx, dy = py - t * vy;
          const double d = std::sqrt(dx * dx + dy * dy);
          const double alpha = clamp01(r - d + 0.5, 0.0, 1.0) * ink;
          float& cell = img[static_cast<std::int64_t>(y) * size + x];
          cell = std::max(cell, static_cast<float>(alpha));
        }
    }
  }
  for (std::int64_t i = 0; i < img.numel(); ++i)
    img[i] = static_cast<float>(std::lround(clamp01(img[i], 0.0, 1.0) * 255.0)) / 255.0f;
  return img;
}

/// Map unit-square skeleton points into pixel space.
inline std::vector<Polyline> to_pixels(const Skeleton& s, int size) {
  std::vector<Polyline> out;
  for (const auto& pl : s.strokes) {
    Polyline q;
    for (const auto& p : pl) q.push_back({p[0] * (size - 1), p[1] * (size - 1)});
    out.push_back(std::move(q));
  }
  return out;
}

inline Tensor<float> render_canonical(const Skeleton& s, int size) {
  return render(to_pixels(s, size), size, 1.8, 1.0);
}

inline double raster_distance(const Tensor<float>& a, const Tensor<float>& b) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

/// Choose one skeleton per class. Candidates are drawn per (seed, class,
/// attempt); a candidate is accepted when its canonical raster is at least
/// `min_dist` from every earlier class, otherwise the most distant of 64
/// attempts wins — fully deterministic either way.
inline std::vector<Skeleton> class_skeletons(int classes, std::uint64_t seed, int size,
                                             double min_dist = 4.0) {
  std::vector<Skeleton> picked;
  std::vector<Tensor<float>> rasters;
  for (int c = 0; c < classes; ++c) {
    Skeleton best;
    Tensor<float> best_raster;
    double best_score = -1.0;
    for (int attempt = 0; attempt < 64; ++attempt) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c), 0x91c0 + attempt));
      Skeleton cand = make_skeleton(rng);
      Tensor<float> raster = render_canonical(cand, size);
      double score = 1e300;
      for (const auto& prev : rasters) score = std::min(score, raster_distance(raster, prev));
      if (score > best_score) {
        best_score = score;
        best = std::move(cand);
        best_raster = std::move(raster);
      }
      if (best_score >= min_dist) break;
    }
    picked.push_back(std::move(best));
    rasters.push_back(std::move(best_raster));
  }
  return picked;
}

/// One jittered rendering of a class skeleton: small rotation and shift,
/// per-point wobble, random stroke thickness and ink level.
inline Tensor<float> sample(const Skeleton& skel, int size, Rng& rng) {
  const double theta = rng.uniform(-8.0, 8.0) * 0.017453292519943295;
  const double dx = rng.uniform(-2.0, 2.0), dy = rng.uniform(-2.0, 2.0);
  const double thickness = rng.uniform(1.4, 2.2);
  const double ink = rng.uniform(0.75, 1.0);
  const double c = (size - 1) / 2.0;
  const double cth = std::cos(theta), sth = std::sin(theta);
  std::vector<Polyline> px;
  for (const auto& pl : skel.strokes) {
    Polyline q;
    for (const auto& p : pl) {
      const double nx = (p[0] + rng.normal() * 0.015) * (size - 1) - c;
      const double ny = (p[1] + rng.normal() * 0.015) * (size - 1) - c;
      q.push_back({cth * nx - sth * ny + c + dx, sth * nx + cth * ny + c + dy});
    }
    px.push_back(std::move(q));
  }
  return render(px, size, thickness, ink);
}

inline std::string class_dir_name(int c) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "c%03d", c);
  return buf;
}

inline std::string sample_file_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%05d.pgm", i);
  return buf;
}

}  // namespace toy

/// Build the synthetic corpus in memory: per_class jittered samples of each
/// class skeleton. Pixels are identical to what the generated files decode
/// to (both are 8-bit quantized).
inline std::vector<LabeledImage> toy_dataset(const ToyParams& p,
                                             std::vector<std::string>* class_names = nullptr) {
  p.validate();
  auto skeletons = toy::class_skeletons(p.classes, p.seed, p.image_size);
  std::vector<LabeledImage> out;
  if (class_names) class_names->clear();
  for (int c = 0; c < p.classes; ++c) {
    if (class_names) class_names->push_back(toy::class_dir_name(c));
    for (int i = 0; i < p.per_class; ++i) {
      Rng rng(derive_seed(p.seed, static_cast<std::uint64_t>(c), 0x5a000000ull + i));
      LabeledImage li;
      li.pixels = toy::sample(skeletons[static_cast<size_t>(c)], p.image_size, rng);
      li.label = c;
      li.source_id = toy::class_dir_name(c) + "/" + toy::sample_file_name(i);
      out.push_back(std::move(li));
    }
  }
  return out;
}

/// Write the synthetic corpus as PGM files in class-per-directory layout.
/// The corpus is built under a temporary sibling directory and renamed into
/// place once complete; the destination must not already exist.
inline void generate_toy_corpus(const std::filesystem::path& out_root, const ToyParams& p) {
  namespace fs = std::filesystem;
  p.validate();
  if (fs::exists(out_root) && (!fs::is_directory(out_root) || !fs::is_empty(out_root)))
    throw DataError("output path already exists and is not empty: " + out_root.string());
  const fs::path tmp = out_root.string() + ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  auto images = toy_dataset(p);
  for (const auto& li : images) {
    const fs::path dest = tmp / li.source_id;
    fs::create_directories(dest.parent_path());
    write_pgm(dest, li.pixels);
  }
  fs::remove_all(out_root);
  fs::rename(tmp, out_root);
}

}  // namespace glyphnet
