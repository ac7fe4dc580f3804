#pragma once

// 16-bit binary PGM export of grids. The mass-to-gray mapping is returned as
// JSON so it can be written next to the image.

#include <algorithm>
#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "bifscope/error.hpp"
#include "bifscope/grid.hpp"

namespace bifscope::io {

enum class GrayMapping { Affine, Log };

struct PgmImage {
  std::string bytes;
  nlohmann::json mapping;  // sidecar description of value -> gray
};

/// P5, maxval 65535, big-endian samples. Row 0 of the image is the largest Im.
/// Affine: gray = 65535 * (v - lo) / (hi - lo). Log: gray = 65535 * (log10(v / hi) + decades) / decades,
/// values below hi * 10^-decades (and non-positive values) map to 0. Non-finite values map to 0.
inline PgmImage encode_pgm(const Grid<double>& g, GrayMapping mapping = GrayMapping::Affine, double decades = 6.0) {
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (double v : g.data()) {
    if (!std::isfinite(v)) continue;
    if (!any) lo = hi = v, any = true;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  auto gray = [&](double v) -> unsigned {
    if (!std::isfinite(v) || !any) return 0;
    double t;
    if (mapping == GrayMapping::Affine) {
      t = hi > lo ? (v - lo) / (hi - lo) : 0.0;
    } else {
      if (!(v > 0.0) || !(hi > 0.0)) return 0;
      t = (std::log10(v / hi) + decades) / decades;
    }
    t = std::clamp(t, 0.0, 1.0);
    return static_cast<unsigned>(std::lround(t * 65535.0));
  };
  PgmImage img;
  img.bytes = "P5\n" + std::to_string(g.nx()) + " " + std::to_string(g.ny()) + "\n65535\n";
  img.bytes.reserve(img.bytes.size() + 2 * g.size());
  for (int j = g.ny() - 1; j >= 0; --j) {
    for (int i = 0; i < g.nx(); ++i) {
      const unsigned v = gray(g(i, j));
      img.bytes.push_back(static_cast<char>(v >> 8));
      img.bytes.push_back(static_cast<char>(v & 0xff));
    }
  }
  const Window& w = g.window();
  img.mapping = {
      {"format", "P5"},
      {"maxval", 65535},
      {"width", g.nx()},
      {"height", g.ny()},
      {"mapping", mapping == GrayMapping::Affine ? "affine" : "log"},
      {"value_min", any ? lo : 0.0},
      {"value_max", any ? hi : 0.0},
      {"window", {{"re_min", w.re_min}, {"re_max", w.re_max}, {"im_min", w.im_min}, {"im_max", w.im_max}}},
      {"row_order", "top row is im_max"},
  };
  if (mapping == GrayMapping::Log) img.mapping["decades"] = decades;
  return img;
}

}  // namespace bifscope::io
