#include "mscl/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "mscl/error.hpp"

namespace mscl {

using nlohmann::json;

BinaryMask BinaryMask::empty(std::size_t width, std::size_t height) {
  return BinaryMask{width, height, std::vector<std::uint8_t>(width * height, 0)};
}

std::size_t BinaryMask::area() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

void SegmenterConfig::validate() const {
  auto unit = [](double v, const char *name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string("segmenter.") + name + " must lie in [0, 1]");
  };
  if (grid_size < 1) throw ConfigError("segmenter.grid_size must be >= 1");
  unit(conf_threshold, "conf_threshold");
  unit(stability_threshold, "stability_threshold");
  unit(nms_iou_threshold, "nms_iou_threshold");
  unit(background_attenuation, "background_attenuation");
  if (!(stability_offset > 0.0)) throw ConfigError("segmenter.stability_offset must be > 0");
}

std::vector<Point> generate_point_grid(std::size_t width, std::size_t height, std::size_t grid_size) {
  if (width == 0 || height == 0) throw EmptyInputError("point grid over a zero-sized image");
  if (grid_size == 0) throw ParameterError("grid_size must be >= 1");
  std::vector<Point> points;
  points.reserve(grid_size * grid_size);
  const double g = static_cast<double>(grid_size);
  for (std::size_t j = 0; j < grid_size; ++j) {
    const auto y = static_cast<std::size_t>(std::floor((static_cast<double>(j) + 0.5) * static_cast<double>(height) / g));
    for (std::size_t i = 0; i < grid_size; ++i) {
      const auto x = static_cast<std::size_t>(std::floor((static_cast<double>(i) + 0.5) * static_cast<double>(width) / g));
      points.push_back({x, y});
    }
  }
  return points;
}

BinaryMask binarize(const MaskLogits &logits, double threshold) {
  BinaryMask m = BinaryMask::empty(logits.width, logits.height);
  for (std::size_t i = 0; i < logits.logits.size(); ++i) m.bits[i] = logits.logits[i] > threshold ? 1 : 0;
  return m;
}

double mask_iou(const BinaryMask &a, const BinaryMask &b) {
  if (a.width != b.width || a.height != b.height || a.bits.size() != b.bits.size()) {
    throw DimensionError("mask_iou: " + std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
                         std::to_string(b.width) + "x" + std::to_string(b.height));
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    inter += a.bits[i] & b.bits[i];
    uni += a.bits[i] | b.bits[i];
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double stability_score(const MaskLogits &logits, double threshold, double offset) {
  if (!(offset > 0.0)) throw ParameterError("stability offset must be > 0");
  return mask_iou(binarize(logits, threshold + offset), binarize(logits, threshold - offset));
}

std::vector<MaskProposal> mask_nms(std::vector<MaskProposal> proposals, double iou_threshold) {
  std::stable_sort(proposals.begin(), proposals.end(), [](const MaskProposal &a, const MaskProposal &b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.area > b.area;
  });
  std::vector<MaskProposal> kept;
  for (auto &p : proposals) {
    bool keep = std::all_of(kept.begin(), kept.end(),
                            [&](const MaskProposal &k) { return mask_iou(p.mask, k.mask) <= iou_threshold; });
    if (keep) kept.push_back(std::move(p));
  }
  return kept;
}

std::vector<MaskProposal> filter_masks(const std::vector<MaskProposal> &proposals, const SegmenterConfig &config) {
  std::vector<MaskProposal> survivors;
  for (const auto &p : proposals) {
    if (p.confidence < config.conf_threshold) continue;
    if (p.stability < config.stability_threshold) continue;
    survivors.push_back(p);
  }
  return mask_nms(std::move(survivors), config.nms_iou_threshold);
}

GrayImage composite_roi(const GrayImage &image, std::span<const MaskProposal> kept, double attenuation) {
  if (!(attenuation >= 0.0 && attenuation <= 1.0)) throw ParameterError("background attenuation must lie in [0, 1]");
  std::vector<std::uint8_t> roi(image.pixels.size(), 0);
  for (const auto &p : kept) {
    if (p.mask.width != image.width || p.mask.height != image.height) {
      throw DimensionError("composite_roi: mask size differs from image size");
    }
    for (std::size_t i = 0; i < roi.size(); ++i) roi[i] |= p.mask.bits[i];
  }
  GrayImage out = image;
  for (std::size_t i = 0; i < roi.size(); ++i)
    if (!roi[i]) out.pixels[i] *= attenuation;
  return out;
}

namespace {

// 4-connected component of `inside` containing `seed`, as pixel indices.
template <class Pred>
std::vector<std::size_t> flood(std::size_t width, std::size_t height, std::size_t seed, Pred inside) {
  std::vector<std::size_t> out;
  std::vector<std::uint8_t> seen(width * height, 0);
  std::deque<std::size_t> queue{seed};
  seen[seed] = 1;
  while (!queue.empty()) {
    const auto idx = queue.front();
    queue.pop_front();
    out.push_back(idx);
    const auto x = idx % width, y = idx / width;
    auto visit = [&](std::size_t n) {
      if (!seen[n] && inside(n)) {
        seen[n] = 1;
        queue.push_back(n);
      }
    };
    if (x > 0) visit(idx - 1);
    if (x + 1 < width) visit(idx + 1);
    if (y > 0) visit(idx - width);
    if (y + 1 < height) visit(idx + width);
  }
  return out;
}

}  // namespace

std::vector<CandidateMask> ThresholdBackend::propose(const GrayImage &image, std::span<const Point> points,
                                                     std::string_view) const {
  const auto w = image.width, h = image.height;
  const auto &px = image.pixels;
  std::vector<CandidateMask> out;
  for (double level : options_.levels) {
    std::vector<std::uint8_t> claimed(w * h, 0);
    for (const auto &pt : points) {
      if (pt.x >= w || pt.y >= h) continue;
      const std::size_t seed = pt.y * w + pt.x;
      if (!(px[seed] > level) || claimed[seed]) continue;

      auto comp = flood(w, h, seed, [&](std::size_t i) { return px[i] > level; });
      BinaryMask mask = BinaryMask::empty(w, h);
      for (auto i : comp) {
        mask.bits[i] = 1;
        claimed[i] = 1;
      }

      double inner = 0.0, border = 0.0;
      std::size_t border_n = 0;
      std::vector<std::uint8_t> ring(w * h, 0);
      for (auto i : comp) {
        inner += px[i];
        const auto x = i % w, y = i / w;
        auto touch = [&](std::size_t n) {
          if (!mask.bits[n] && !ring[n]) {
            ring[n] = 1;
            border += px[n];
            ++border_n;
          }
        };
        if (x > 0) touch(i - 1);
        if (x + 1 < w) touch(i + 1);
        if (y > 0) touch(i - w);
        if (y + 1 < h) touch(i + w);
      }
      // A component with no outside border is the whole frame: no contrast.
      if (border_n == 0) continue;
      inner /= static_cast<double>(comp.size());
      border /= static_cast<double>(border_n);
      const double confidence = std::clamp((inner - border) / inner, 0.0, 1.0);

      MaskLogits logits{w, h, std::vector<double>(w * h, -options_.logit_scale)};
      const double loose = level - options_.jitter_margin;
      for (auto i : flood(w, h, seed, [&](std::size_t i) { return px[i] > loose; })) {
        logits.logits[i] = (px[i] - level) * options_.logit_scale;
      }
      out.push_back(CandidateMask{std::move(mask), confidence, std::move(logits), std::nullopt});
    }
  }
  return out;
}

std::vector<CandidateMask> ProposalsDirBackend::propose(const GrayImage &image, std::span<const Point>,
                                                        std::string_view image_id) const {
  const auto path = dir_ / (std::string(image_id) + ".json");
  if (!std::filesystem::exists(path)) {
    throw BackendError(name(), "no proposal manifest for image '" + std::string(image_id) + "' at " + path.string());
  }
  ProposalManifest manifest;
  try {
    manifest = read_manifest(path);
  } catch (const Error &e) {
    throw BackendError(name(), e.what());
  }
  if (manifest.width != image.width || manifest.height != image.height) {
    throw BackendError(name(), "manifest " + path.string() + " is " + std::to_string(manifest.width) + "x" +
                                   std::to_string(manifest.height) + " but image is " + std::to_string(image.width) +
                                   "x" + std::to_string(image.height));
  }
  std::vector<CandidateMask> out;
  out.reserve(manifest.proposals.size());
  for (const auto &p : manifest.proposals) {
    out.push_back(CandidateMask{rle_decode(p.rle, manifest.width, manifest.height), p.confidence, std::nullopt,
                                p.stability});
  }
  return out;
}

SegmentResult segment_image_detailed(const GrayImage &image, const ProposalBackend &backend,
                                     const SegmenterConfig &config, std::string_view image_id) {
  image.validate();
  config.validate();
  const auto points = generate_point_grid(image.width, image.height, config.grid_size);
  std::vector<CandidateMask> candidates;
  try {
    candidates = backend.propose(image, points, image_id);
  } catch (const BackendError &) {
    throw;
  } catch (const std::exception &e) {
    throw BackendError(backend.name(), e.what());
  }

  SegmentResult result;
  for (auto &c : candidates) {
    if (c.mask.width != image.width || c.mask.height != image.height || c.mask.bits.size() != image.size()) {
      throw BackendError(backend.name(), "proposal mask is not image-sized");
    }
    MaskProposal p;
    p.confidence = c.confidence;
    p.stability = c.logits ? stability_score(*c.logits, 0.0, config.stability_offset) : c.stability.value_or(1.0);
    p.area = c.mask.area();
    p.mask = std::move(c.mask);
    if (p.area == 0) continue;
    result.proposals.push_back(std::move(p));
  }
  result.kept = filter_masks(result.proposals, config);
  result.processed = composite_roi(image, result.kept, config.background_attenuation);
  return result;
}

GrayImage segment_image(const GrayImage &image, const ProposalBackend &backend, const SegmenterConfig &config,
                        std::string_view image_id) {
  return segment_image_detailed(image, backend, config, image_id).processed;
}

std::vector<std::uint32_t> rle_encode(const BinaryMask &mask) {
  std::vector<std::uint32_t> counts;
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (auto b : mask.bits) {
    if (b != current) {
      counts.push_back(run);
      run = 0;
      current = b;
    }
    ++run;
  }
  counts.push_back(run);
  return counts;
}

BinaryMask rle_decode(std::span<const std::uint32_t> counts, std::size_t width, std::size_t height) {
  const std::uint64_t total = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  if (total != static_cast<std::uint64_t>(width) * height) {
    throw FormatError("RLE counts sum to " + std::to_string(total) + ", expected " + std::to_string(width * height));
  }
  BinaryMask m = BinaryMask::empty(width, height);
  std::size_t at = 0;
  std::uint8_t value = 0;
  for (auto c : counts) {
    std::fill_n(m.bits.begin() + static_cast<std::ptrdiff_t>(at), c, value);
    at += c;
    value ^= 1;
  }
  return m;
}

ProposalManifest manifest_from_proposals(std::string image_id, std::size_t width, std::size_t height,
                                         std::span<const MaskProposal> proposals) {
  ProposalManifest m{std::move(image_id), width, height, {}};
  for (const auto &p : proposals) m.proposals.push_back({p.confidence, p.stability, rle_encode(p.mask)});
  return m;
}

std::string manifest_to_json(const ProposalManifest &manifest) {
  json props = json::array();
  for (const auto &p : manifest.proposals) {
    json item;
    item["confidence"] = p.confidence;
    item["stability"] = p.stability ? json(*p.stability) : json(nullptr);
    item["rle"] = p.rle;
    props.push_back(std::move(item));
  }
  json doc;
  doc["image_id"] = manifest.image_id;
  doc["width"] = manifest.width;
  doc["height"] = manifest.height;
  doc["proposals"] = std::move(props);
  return doc.dump();
}

ProposalManifest manifest_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error &e) {
    throw FormatError(std::string("proposal manifest is not valid JSON: ") + e.what());
  }
  auto need = [](const json &obj, const char *key, const std::string &where) -> const json & {
    if (!obj.is_object() || !obj.contains(key)) throw SchemaError(where + ": missing field '" + key + "'");
    return obj.at(key);
  };
  ProposalManifest m;
  const auto &id = need(doc, "image_id", "manifest");
  const auto &w = need(doc, "width", "manifest");
  const auto &h = need(doc, "height", "manifest");
  const auto &props = need(doc, "proposals", "manifest");
  if (!id.is_string()) throw SchemaError("manifest: image_id must be a string");
  if (!w.is_number_unsigned() || !h.is_number_unsigned() || w.get<std::size_t>() == 0 || h.get<std::size_t>() == 0) {
    throw SchemaError("manifest: width/height must be positive integers");
  }
  if (!props.is_array()) throw SchemaError("manifest: proposals must be an array");
  m.image_id = id.get<std::string>();
  m.width = w.get<std::size_t>();
  m.height = h.get<std::size_t>();
  for (std::size_t i = 0; i < props.size(); ++i) {
    const std::string where = "proposals[" + std::to_string(i) + "]";
    const auto &p = props[i];
    const auto &conf = need(p, "confidence", where);
    const auto &stab = need(p, "stability", where);
    const auto &rle = need(p, "rle", where);
    if (!conf.is_number() || !(conf.get<double>() >= 0.0 && conf.get<double>() <= 1.0)) {
      throw SchemaError(where + ": confidence must be a number in [0, 1]");
    }
    ManifestProposal mp;
    mp.confidence = conf.get<double>();
    if (!stab.is_null()) {
      if (!stab.is_number() || !(stab.get<double>() >= 0.0 && stab.get<double>() <= 1.0)) {
        throw SchemaError(where + ": stability must be null or a number in [0, 1]");
      }
      mp.stability = stab.get<double>();
    }
    if (!rle.is_array()) throw SchemaError(where + ": rle must be an array");
    for (const auto &c : rle) {
      if (!c.is_number_unsigned()) throw SchemaError(where + ": rle counts must be non-negative integers");
      mp.rle.push_back(c.get<std::uint32_t>());
    }
    const std::uint64_t total = std::accumulate(mp.rle.begin(), mp.rle.end(), std::uint64_t{0});
    if (total != static_cast<std::uint64_t>(m.width) * m.height) {
      throw FormatError(where + ": rle counts sum to " + std::to_string(total) + ", expected " +
                        std::to_string(m.width * m.height));
    }
    m.proposals.push_back(std::move(mp));
  }
  return m;
}

ProposalManifest read_manifest(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return manifest_from_json(ss.str());
}

void write_manifest(const std::filesystem::path &path, const ProposalManifest &manifest) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << manifest_to_json(manifest) << '\n';
}

}  // namespace mscl
