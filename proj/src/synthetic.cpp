#include "cankd/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "cankd/errors.hpp"
#include "cankd/rng.hpp"

namespace cankd {

namespace {

constexpr int kPaletteSize = 8;

// Class id -> base color. Background is dark gray; foreground classes get
// well-separated colors so the task is learnable at toy scale.
const double kPalette[kPaletteSize][3] = {
    {0.15, 0.15, 0.15}, {0.85, 0.20, 0.20}, {0.20, 0.75, 0.25}, {0.25, 0.35, 0.90},
    {0.90, 0.80, 0.20}, {0.75, 0.25, 0.80}, {0.20, 0.80, 0.80}, {0.95, 0.55, 0.15},
};

}  // namespace

SyntheticSample generate_sample(std::uint64_t seed, int h, int w, int num_classes, int min_shapes,
                                int max_shapes) {
  if (h < 8 || w < 8) throw ConfigInvalid("synthetic samples need H, W >= 8");
  if (num_classes < 2 || num_classes > kPaletteSize) {
    throw ConfigInvalid("num_classes must be in [2," + std::to_string(kPaletteSize) + "]");
  }
  if (min_shapes < 0 || max_shapes < min_shapes) {
    throw ConfigInvalid("invalid shape count range");
  }

  Rng rng(seed);
  SyntheticSample sample;
  sample.seed = seed;
  sample.label_map.h = h;
  sample.label_map.w = w;
  sample.label_map.ids.assign(static_cast<std::size_t>(h) * w, 0);

  // Shapes carry distinct foreground classes, so the count is capped by the
  // number of available classes.
  const int max_fg = num_classes - 1;
  const int hi = std::min(max_shapes, max_fg);
  const int lo = std::min(min_shapes, hi);
  const int count = rng.uniform_int(lo, hi);

  std::vector<int> classes(static_cast<std::size_t>(max_fg));
  for (int c = 0; c < max_fg; ++c) classes[static_cast<std::size_t>(c)] = c + 1;
  rng.shuffle(classes);

  for (int s = 0; s < count; ++s) {
    const int cls = classes[static_cast<std::size_t>(s)];
    const bool disc = rng.uniform() < 0.5;
    if (disc) {
      const int radius = rng.uniform_int(2, std::max(2, std::min(h, w) / 4));
      const int cy = rng.uniform_int(radius, h - 1 - radius);
      const int cx = rng.uniform_int(radius, w - 1 - radius);
      for (int y = cy - radius; y <= cy + radius; ++y)
        for (int x = cx - radius; x <= cx + radius; ++x) {
          const int dy = y - cy, dx = x - cx;
          if (dy * dy + dx * dx <= radius * radius) {
            sample.label_map.ids[static_cast<std::size_t>(y) * w + x] = cls;
          }
        }
    } else {
      const int bh = rng.uniform_int(3, std::max(3, h / 3));
      const int bw = rng.uniform_int(3, std::max(3, w / 3));
      const int y0 = rng.uniform_int(0, h - bh);
      const int x0 = rng.uniform_int(0, w - bw);
      for (int y = y0; y < y0 + bh; ++y)
        for (int x = x0; x < x0 + bw; ++x) {
          sample.label_map.ids[static_cast<std::size_t>(y) * w + x] = cls;
        }
    }
  }

  sample.image = Tensor(Shape{3, h, w}, 0.0);
  const std::int64_t n = static_cast<std::int64_t>(h) * w;
  for (std::int64_t p = 0; p < n; ++p) {
    const int cls = sample.label_map.ids[static_cast<std::size_t>(p)];
    for (int ch = 0; ch < 3; ++ch) {
      const double noisy = kPalette[cls][ch] + 0.05 * rng.normal();
      sample.image.values[static_cast<std::size_t>(ch * n + p)] =
          std::clamp(noisy, 0.0, 1.0);
    }
  }
  return sample;
}

}  // namespace cankd
