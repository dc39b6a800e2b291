#include "ngvi/data.hpp"

#include "ngvi/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

namespace ngvi {

namespace {

using Kind = IdxError::Kind;

std::uint32_t read_be32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (std::size_t k = 0; k < 4; ++k) v = (v << 8) | static_cast<std::uint8_t>(bytes[offset + k]);
  return v;
}

void append_be32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xff));
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(Kind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void check_header(std::string_view bytes, std::uint32_t magic, std::size_t header_len, const char* what) {
  if (bytes.size() < 4) throw IdxError(Kind::kTruncated, std::string(what) + ": missing magic number");
  const std::uint32_t got = read_be32(bytes, 0);
  if (got != magic) {
    std::ostringstream msg;
    msg << what << ": bad magic 0x" << std::hex << got << ", expected 0x" << magic;
    throw IdxError(Kind::kBadMagic, msg.str());
  }
  if (bytes.size() < header_len) throw IdxError(Kind::kTruncated, std::string(what) + ": truncated header");
}

}  // namespace

RawImageSet parse_idx(std::string_view image_bytes, std::string_view label_bytes) {
  check_header(image_bytes, kIdxImageMagic, 16, "images");
  check_header(label_bytes, kIdxLabelMagic, 8, "labels");

  const std::uint32_t n = read_be32(image_bytes, 4);
  const std::uint32_t rows = read_be32(image_bytes, 8);
  const std::uint32_t cols = read_be32(image_bytes, 12);
  const std::uint32_t n_labels = read_be32(label_bytes, 4);
  if (n != n_labels) {
    throw IdxError(Kind::kCountMismatch,
                   "images file has " + std::to_string(n) + " entries, labels file " + std::to_string(n_labels));
  }

  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  if (image_bytes.size() < 16 + n * pixels) throw IdxError(Kind::kTruncated, "images: truncated pixel data");
  if (label_bytes.size() < 8 + static_cast<std::size_t>(n)) throw IdxError(Kind::kTruncated, "labels: truncated");

  RawImageSet raw;
  raw.rows = rows;
  raw.cols = cols;
  raw.images.resize(n, static_cast<Eigen::Index>(pixels));
  raw.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const char* p = image_bytes.data() + 16 + i * pixels;
    for (std::size_t j = 0; j < pixels; ++j) {
      raw.images(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          static_cast<std::uint8_t>(p[j]) / 255.0;
    }
    raw.labels[i] = static_cast<std::uint8_t>(label_bytes[8 + i]);
  }
  return raw;
}

RawImageSet load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  return parse_idx(slurp(images_path), slurp(labels_path));
}

std::string serialize_idx_images(const RawImageSet& raw) {
  std::string out;
  const std::size_t n = raw.n();
  const std::size_t pixels = static_cast<std::size_t>(raw.rows) * raw.cols;
  out.reserve(16 + n * pixels);
  append_be32(out, kIdxImageMagic);
  append_be32(out, static_cast<std::uint32_t>(n));
  append_be32(out, raw.rows);
  append_be32(out, raw.cols);
  for (Eigen::Index i = 0; i < raw.images.rows(); ++i) {
    for (Eigen::Index j = 0; j < raw.images.cols(); ++j) {
      const double v = std::clamp(raw.images(i, j), 0.0, 1.0);
      out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::lround(v * 255.0))));
    }
  }
  return out;
}

std::string serialize_idx_labels(const RawImageSet& raw) {
  std::string out;
  append_be32(out, kIdxLabelMagic);
  append_be32(out, static_cast<std::uint32_t>(raw.n()));
  for (std::uint8_t l : raw.labels) out.push_back(static_cast<char>(l));
  return out;
}

void write_idx(const RawImageSet& raw, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
  auto dump = [](const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IdxError(Kind::kIo, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  };
  dump(images_path, serialize_idx_images(raw));
  dump(labels_path, serialize_idx_labels(raw));
}

Dataset filter_binary(const RawImageSet& raw, int a, int b) {
  if (a == b) throw std::invalid_argument("filter_binary: labels must differ");
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < raw.n(); ++i) {
    if (raw.labels[i] == a || raw.labels[i] == b) keep.push_back(static_cast<Eigen::Index>(i));
  }
  if (keep.empty()) {
    throw std::invalid_argument("filter_binary: no rows with label " + std::to_string(a) + " or " +
                                std::to_string(b));
  }
  Dataset out;
  out.x.resize(static_cast<Eigen::Index>(keep.size()), raw.images.cols());
  out.y.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    out.x.row(r) = raw.images.row(keep[k]);
    out.y(r) = raw.labels[static_cast<std::size_t>(keep[k])] == a ? 1.0 : -1.0;
  }
  return out;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");

  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const std::size_t end = line.find(',', start);
      std::string_view field(line.data() + start, (end == std::string::npos ? line.size() : end) - start);
      while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
      while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size()) {
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": bad number '" +
                                 std::string(field) + "'");
      }
      row.push_back(v);
      if (end == std::string::npos) break;
      start = end + 1;
    }
    if (row.size() < 2) throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": need features and a label");
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": ragged row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path.string() + ": no data rows");

  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(rows.front().size() - 1);
  Dataset out;
  out.x.resize(n, d);
  out.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < d; ++j) out.x(i, j) = row[static_cast<std::size_t>(j)];
    out.y(i) = row.back();
  }
  return out;
}

Dataset synth(std::string_view kind, std::size_t n, std::size_t d, std::uint64_t seed) {
  if (kind == "poisson_point") {
    Dataset out;
    out.x = Eigen::MatrixXd::Constant(1, 1, 0.9);
    out.y = Vec::Constant(1, 24.0);
    return out;
  }
  if (kind != "logistic" && kind != "linear") {
    throw std::invalid_argument("synth: unknown kind '" + std::string(kind) + "'");
  }
  if (n < 1 || d < 1) throw std::invalid_argument("synth: n and d must be >= 1");

  CounterStream rng(seed, 0, StreamPurpose::kData);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;

  Vec z_star(static_cast<Eigen::Index>(d));
  for (auto& v : z_star) v = normal(rng);

  Dataset out;
  out.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  out.y.resize(static_cast<Eigen::Index>(n));
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (Eigen::Index i = 0; i < out.x.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.x.cols(); ++j) out.x(i, j) = scale * normal(rng);
    const double s = out.x.row(i).dot(z_star);
    if (kind == "logistic") {
      out.y(i) = unif(rng) < 1.0 / (1.0 + std::exp(-s)) ? 1.0 : -1.0;
    } else {
      out.y(i) = s + normal(rng);
    }
  }
  return out;
}

}  // namespace ngvi
