#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mscl/image.hpp"

// Everything-mode ROI preprocessing: grid prompts -> proposals from a
// pluggable backend -> confidence / stability / NMS filtering -> background
// attenuation outside the union of kept masks.
namespace mscl {

struct Point {
  std::size_t x = 0;
  std::size_t y = 0;
  bool operator==(const Point &) const = default;
};

struct BinaryMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1, row-major

  static BinaryMask empty(std::size_t width, std::size_t height);
  std::size_t area() const;
  bool operator==(const BinaryMask &) const = default;
};

struct MaskLogits {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> logits;
};

struct MaskProposal {
  BinaryMask mask;
  double confidence = 0.0;
  double stability = 1.0;
  std::size_t area = 0;
};

// What a backend hands back for one prompt. Backends that can see logits
// provide them and stability is computed here; file-backed backends carry a
// precomputed stability (nullopt means 1.0).
struct CandidateMask {
  BinaryMask mask;
  double confidence = 0.0;
  std::optional<MaskLogits> logits;
  std::optional<double> stability;
};

struct SegmenterConfig {
  std::size_t grid_size = 8;
  double conf_threshold = 0.8;
  double stability_threshold = 0.85;
  double stability_offset = 1.0;
  double nms_iou_threshold = 0.7;
  double background_attenuation = 0.2;

  void validate() const;
  bool operator==(const SegmenterConfig &) const = default;
};

class ProposalBackend {
 public:
  virtual ~ProposalBackend() = default;
  virtual std::string name() const = 0;
  // `image_id` identifies the image for backends that replay stored
  // proposals; in-process backends ignore it.
  virtual std::vector<CandidateMask> propose(const GrayImage &image, std::span<const Point> points,
                                             std::string_view image_id) const = 0;
};

// Builtin stand-in for the SAM mask generator: multi-level thresholding plus
// 4-connected components seeded by the prompt points. Deterministic.
class ThresholdBackend : public ProposalBackend {
 public:
  struct Options {
    std::vector<double> levels{0.3, 0.5, 0.7};
    double logit_scale = 10.0;
    // Intensity margin below a level that still receives graded logits, so
    // that threshold jitter can grow the mask.
    double jitter_margin = 0.2;
  };

  ThresholdBackend() = default;
  explicit ThresholdBackend(Options options) : options_(std::move(options)) {}

  std::string name() const override { return "builtin"; }
  std::vector<CandidateMask> propose(const GrayImage &image, std::span<const Point> points,
                                     std::string_view image_id) const override;

 private:
  Options options_;
};

// Replays proposal manifests "<image_id>.json" from a directory.
class ProposalsDirBackend : public ProposalBackend {
 public:
  explicit ProposalsDirBackend(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::string name() const override { return "proposals-dir"; }
  std::vector<CandidateMask> propose(const GrayImage &image, std::span<const Point> points,
                                     std::string_view image_id) const override;

 private:
  std::filesystem::path dir_;
};

std::vector<Point> generate_point_grid(std::size_t width, std::size_t height, std::size_t grid_size);

BinaryMask binarize(const MaskLogits &logits, double threshold);

// IoU of the masks binarized at t + offset and t - offset; 1.0 when both are
// empty.
double stability_score(const MaskLogits &logits, double threshold, double offset);

double mask_iou(const BinaryMask &a, const BinaryMask &b);

std::vector<MaskProposal> mask_nms(std::vector<MaskProposal> proposals, double iou_threshold);

std::vector<MaskProposal> filter_masks(const std::vector<MaskProposal> &proposals, const SegmenterConfig &config);

GrayImage composite_roi(const GrayImage &image, std::span<const MaskProposal> kept, double attenuation);

struct SegmentResult {
  GrayImage processed;
  std::vector<MaskProposal> proposals;  // every candidate, scored
  std::vector<MaskProposal> kept;
};

SegmentResult segment_image_detailed(const GrayImage &image, const ProposalBackend &backend,
                                     const SegmenterConfig &config, std::string_view image_id = {});

GrayImage segment_image(const GrayImage &image, const ProposalBackend &backend, const SegmenterConfig &config,
                        std::string_view image_id = {});

// Row-major run lengths, background run first (possibly 0).
std::vector<std::uint32_t> rle_encode(const BinaryMask &mask);
BinaryMask rle_decode(std::span<const std::uint32_t> counts, std::size_t width, std::size_t height);

// Proposal interchange manifest:
// {image_id, width, height, proposals: [{confidence, stability|null, rle}]}
struct ManifestProposal {
  double confidence = 0.0;
  std::optional<double> stability;
  std::vector<std::uint32_t> rle;
};

struct ProposalManifest {
  std::string image_id;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<ManifestProposal> proposals;
};

ProposalManifest manifest_from_proposals(std::string image_id, std::size_t width, std::size_t height,
                                         std::span<const MaskProposal> proposals);
std::string manifest_to_json(const ProposalManifest &manifest);
// Throws FormatError/SchemaError with the offending proposal index.
ProposalManifest manifest_from_json(std::string_view text);
ProposalManifest read_manifest(const std::filesystem::path &path);
void write_manifest(const std::filesystem::path &path, const ProposalManifest &manifest);

}  // namespace mscl
