// SPDX-License-Identifier: Apache-2.0

#include "mocap/render.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <ostream>

#include "mocap/errors.hpp"
#include "mocap/parallel.hpp"
#include "mocap/rng.hpp"

namespace mocap {

namespace {

void validate(const RenderConfig& config) {
  if (!(config.t_near >= 0.0) || !(config.t_near < config.t_far))
    throw InvalidBounds(fmt::format("render bounds must satisfy 0 <= t_near < t_far, got [{}, {}]",
                                    config.t_near, config.t_far));
  if (config.sample_count < 2)
    throw InvalidBounds(fmt::format("sample_count must be >= 2, got {}", config.sample_count));
}

Vec3 integrate(const RadianceField& field, const Ray& ray, const RenderConfig& config, Rng* rng) {
  const double h = (config.t_far - config.t_near) / config.sample_count;
  Vec3 color = Vec3::Zero();
  double transmittance = 1.0;
  for (int k = 0; k < config.sample_count; ++k) {
    const double u = rng ? rng->uniform() : 0.5;
    const double t = config.t_near + (k + u) * h;
    const FieldSample s = field(ray.at(t), ray.direction);
    const double alpha = 1.0 - std::exp(-s.sigma * h);
    color += transmittance * alpha * s.color;
    transmittance *= 1.0 - alpha;
  }
  return color;
}

}  // namespace

Vec3 render_ray(const RadianceField& field, const Ray& ray, const RenderConfig& config) {
  validate(config);
  if (config.stratified) {
    Rng rng(config.seed);
    return integrate(field, ray, config, &rng);
  }
  return integrate(field, ray, config, nullptr);
}

ImageBuffer render_image(const RadianceField& field, const Camera& camera,
                         const RenderConfig& config, int threads) {
  validate(config);
  ImageBuffer image;
  image.width = camera.width;
  image.height = camera.height;
  image.pixels.assign(static_cast<std::size_t>(camera.width) * camera.height, Vec3::Zero());

  parallel_for(static_cast<std::size_t>(camera.height), threads, [&](std::size_t row) {
    for (int x = 0; x < camera.width; ++x) {
      const std::size_t index = row * camera.width + x;
      const Ray ray = backproject(camera, Vec2(x + 0.5, row + 0.5));
      if (config.stratified) {
        Rng rng(mix_seed(config.seed, index));  // per-pixel stream
        image.pixels[index] = integrate(field, ray, config, &rng);
      } else {
        image.pixels[index] = integrate(field, ray, config, nullptr);
      }
    }
  });
  return image;
}

namespace {

std::uint8_t quantize(double c) {
  const double scaled = std::clamp(c, 0.0, 1.0) * 255.0;
  return static_cast<std::uint8_t>(std::nearbyint(scaled));  // round half to even
}

}  // namespace

void write_ppm(const ImageBuffer& image, std::ostream& out) {
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(image.width) * 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const Vec3& c = image.at(x, y);
      row[3 * x] = quantize(c.x());
      row[3 * x + 1] = quantize(c.y());
      row[3 * x + 2] = quantize(c.z());
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
}

void write_ppm(const ImageBuffer& image, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path));
  write_ppm(image, out);
  if (!out) throw IoError(fmt::format("failed writing '{}'", path));
}

namespace {

using nlohmann::json;

Vec3 parse_vec3(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3)
    throw ParseError(fmt::format("field spec: {} must be a 3-element array", what));
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

struct Primitive {
  enum class Kind { sphere, slab } kind = Kind::sphere;
  Vec3 center = Vec3::Zero();  // sphere
  double radius = 0.0;
  int axis = 2;  // slab: 0=x, 1=y, 2=z
  double min = 0.0;
  double max = 0.0;
  double sigma = 0.0;
  Vec3 color = Vec3::Zero();

  bool contains(const Vec3& p) const {
    if (kind == Kind::sphere) return (p - center).squaredNorm() <= radius * radius;
    return p[axis] >= min && p[axis] <= max;
  }
};

}  // namespace

RadianceField parse_field_spec(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("field spec: {}", e.what()));
  }

  double bg_sigma = 0.0;
  Vec3 bg_color = Vec3::Zero();
  if (root.contains("background")) {
    const json& bg = root["background"];
    bg_sigma = bg.value("sigma", 0.0);
    if (bg.contains("color")) bg_color = parse_vec3(bg["color"], "background color");
  }

  std::vector<Primitive> primitives;
  for (const json& p : root.value("primitives", json::array())) {
    Primitive prim;
    const std::string type = p.value("type", "");
    if (type == "sphere") {
      prim.kind = Primitive::Kind::sphere;
      prim.center = parse_vec3(p.at("center"), "sphere center");
      prim.radius = p.at("radius").get<double>();
      if (!(prim.radius > 0.0)) throw ParseError("field spec: sphere radius must be positive");
    } else if (type == "slab") {
      prim.kind = Primitive::Kind::slab;
      const std::string axis = p.value("axis", "z");
      if (axis == "x") prim.axis = 0;
      else if (axis == "y") prim.axis = 1;
      else if (axis == "z") prim.axis = 2;
      else throw ParseError(fmt::format("field spec: unknown slab axis '{}'", axis));
      prim.min = p.at("min").get<double>();
      prim.max = p.at("max").get<double>();
      if (!(prim.min < prim.max)) throw ParseError("field spec: slab needs min < max");
    } else {
      throw ParseError(fmt::format("field spec: unknown primitive type '{}'", type));
    }
    prim.sigma = p.at("sigma").get<double>();
    if (prim.sigma < 0.0) throw ParseError("field spec: sigma must be >= 0");
    prim.color = parse_vec3(p.at("color"), "primitive color");
    for (int i = 0; i < 3; ++i)
      if (prim.color[i] < 0.0 || prim.color[i] > 1.0)
        throw ParseError("field spec: color components must be in [0, 1]");
    primitives.push_back(prim);
  }

  return [primitives, bg_sigma, bg_color](const Vec3& p, const Vec3&) -> FieldSample {
    double sigma = bg_sigma;
    Vec3 weighted = bg_sigma * bg_color;
    for (const Primitive& prim : primitives) {
      if (!prim.contains(p)) continue;
      sigma += prim.sigma;
      weighted += prim.sigma * prim.color;
    }
    FieldSample s;
    s.sigma = sigma;
    s.color = sigma > 0.0 ? Vec3(weighted / sigma) : Vec3::Zero();
    return s;
  };
}

RadianceField load_field_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open field spec '{}'", path));
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_field_spec(text);
}

}  // namespace mocap
