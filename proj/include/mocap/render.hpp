// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "mocap/geometry.hpp"

// Expected-color ray integral over a caller-supplied radiance field,
// discretized as alpha-compositing quadrature: per segment of length d,
// alpha = 1 - exp(-sigma d), transmittance T_k = prod_{j<k}(1 - alpha_j),
// color = sum T_k alpha_k c_k. The remainder composites over black.

namespace mocap {

struct FieldSample {
  Vec3 color = Vec3::Zero();  // components in [0, 1]
  double sigma = 0.0;         // >= 0, per cm
};

using RadianceField = std::function<FieldSample(const Vec3& position, const Vec3& direction)>;

struct RenderConfig {
  double t_near = 0.0;  // cm
  double t_far = 0.0;   // cm
  int sample_count = 64;
  bool stratified = false;  // jitter sample positions within their segments
  std::uint64_t seed = 0;
};

// Quadrature of the expected-color integral along one ray. Deterministic per
// seed. Throws InvalidBounds unless 0 <= t_near < t_far and sample_count >= 2.
Vec3 render_ray(const RadianceField& field, const Ray& ray, const RenderConfig& config);

struct ImageBuffer {
  int width = 0;
  int height = 0;
  std::vector<Vec3> pixels;  // row-major

  const Vec3& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

// Per-pixel render_ray over backprojected pixel-center rays. Stratified
// jitter streams are derived per pixel, so the result is independent of the
// thread count.
ImageBuffer render_image(const RadianceField& field, const Camera& camera,
                         const RenderConfig& config, int threads = 1);

// Binary PPM (P6), 8 bits per channel, rounded half-to-even from [0, 1].
void write_ppm(const ImageBuffer& image, std::ostream& out);
void write_ppm(const ImageBuffer& image, const std::string& path);

// Analytic field built from a JSON description of homogeneous primitives
// (spheres and axis-aligned slabs) over an optional homogeneous background.
// Overlapping densities add; colors blend weighted by density.
RadianceField parse_field_spec(const std::string& json_text);
RadianceField load_field_spec(const std::string& path);

}  // namespace mocap
