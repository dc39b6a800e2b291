#pragma once

// Dataset ingestion: IDX image/label pairs (the MNIST distribution format),
// small CSV files, and synthetic generators.

#include "ngvi/models.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ngvi {

/// Images are stored row-major, one image per row, pixels scaled to [0, 1].
struct RawImageSet {
  Eigen::MatrixXd images;
  std::vector<std::uint8_t> labels;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;

  std::size_t n() const { return labels.size(); }
};

class IdxError : public std::runtime_error {
 public:
  enum class Kind { kIo, kBadMagic, kTruncated, kCountMismatch };
  IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

constexpr std::uint32_t kIdxImageMagic = 0x00000803;  // 2051
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;  // 2049

/// Parses in-memory IDX buffers.
RawImageSet parse_idx(std::string_view image_bytes, std::string_view label_bytes);
RawImageSet load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// Inverse of parse_idx; pixels are mapped back with round(255 v).
std::string serialize_idx_images(const RawImageSet& raw);
std::string serialize_idx_labels(const RawImageSet& raw);
void write_idx(const RawImageSet& raw, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

/// Keeps rows labelled a or b in their original order, y = +1 for a and -1
/// for b.  Throws std::invalid_argument when a == b or nothing matches.
Dataset filter_binary(const RawImageSet& raw, int a, int b);

/// Comma-separated, one header row, last column is the label.
Dataset load_csv(const std::filesystem::path& path);

/// Synthetic instances:
///   poisson_point  the single point (x, y) = (0.9, 24); n and d are ignored
///   logistic       z* ~ N(0, I), x ~ N(0, I/d), y = +1 w.p. sigmoid(x^T z*), else -1
///   linear         z* ~ N(0, I), x ~ N(0, I/d), y = x^T z* + N(0, 1)
/// Throws std::invalid_argument on unknown kinds or n, d < 1.
Dataset synth(std::string_view kind, std::size_t n, std::size_t d, std::uint64_t seed);

}  // namespace ngvi
