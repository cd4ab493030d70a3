#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "mea/data/dataset.hpp"
#include "mea/errors.hpp"

namespace mea::data {
namespace {

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) {
    throw FormatError(path.string() + ": truncated header at byte offset " + std::to_string(offset));
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const char buf[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                       static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(buf, 4);
}

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::size_t resolve_classes(const std::vector<std::size_t>& labels,
                            std::optional<std::size_t> num_classes) {
  if (num_classes) return *num_classes;
  std::size_t k = 0;
  for (std::size_t y : labels) k = std::max(k, y + 1);
  return k;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::optional<std::size_t> num_classes) {
  const auto img = read_bytes(images);
  const auto lab = read_bytes(labels);

  if (std::uint32_t magic = read_be32(img, 0, images); magic != kIdxImagesMagic) {
    throw FormatError(images.string() + ": bad IDX image magic at byte offset 0");
  }
  if (std::uint32_t magic = read_be32(lab, 0, labels); magic != kIdxLabelsMagic) {
    throw FormatError(labels.string() + ": bad IDX label magic at byte offset 0");
  }
  const std::size_t n_img = read_be32(img, 4, images);
  const std::size_t rows = read_be32(img, 8, images);
  const std::size_t cols = read_be32(img, 12, images);
  const std::size_t n_lab = read_be32(lab, 4, labels);
  if (n_img != n_lab) {
    throw FormatError("IDX count mismatch: " + std::to_string(n_img) + " images vs " +
                      std::to_string(n_lab) + " labels (byte offset 4)");
  }
  const std::size_t dim = rows * cols;
  if (dim == 0) throw FormatError(images.string() + ": zero image size at byte offset 8");
  if (img.size() != 16 + n_img * dim) {
    throw FormatError(images.string() + ": expected " + std::to_string(16 + n_img * dim) +
                      " bytes, found " + std::to_string(img.size()));
  }
  if (lab.size() != 8 + n_lab) {
    throw FormatError(labels.string() + ": expected " + std::to_string(8 + n_lab) +
                      " bytes, found " + std::to_string(lab.size()));
  }

  Dataset out;
  out.dim = dim;
  out.provenance = "idx:" + images.filename().string();
  out.features.resize(n_img * dim);
  for (std::size_t i = 0; i < n_img * dim; ++i) out.features[i] = img[16 + i] / 255.0;
  out.labels.resize(n_lab);
  for (std::size_t i = 0; i < n_lab; ++i) out.labels[i] = lab[8 + i];
  out.num_classes = resolve_classes(out.labels, num_classes);
  for (std::size_t i = 0; i < n_lab; ++i) {
    if (out.labels[i] >= out.num_classes) {
      throw FormatError(labels.string() + ": label " + std::to_string(out.labels[i]) +
                        " >= K at byte offset " + std::to_string(8 + i));
    }
  }
  return out;
}

void write_idx(const Dataset& dataset, const std::filesystem::path& images,
               const std::filesystem::path& labels, std::size_t rows, std::size_t cols) {
  if (rows * cols != dataset.dim) throw ShapeError("IDX rows x cols must equal dataset dim");
  std::ofstream img(images, std::ios::binary);
  std::ofstream lab(labels, std::ios::binary);
  if (!img || !lab) throw FormatError("cannot open IDX output files");
  write_be32(img, kIdxImagesMagic);
  write_be32(img, static_cast<std::uint32_t>(dataset.size()));
  write_be32(img, static_cast<std::uint32_t>(rows));
  write_be32(img, static_cast<std::uint32_t>(cols));
  for (double v : dataset.features) {
    const long q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
    img.put(static_cast<char>(q));
  }
  write_be32(lab, kIdxLabelsMagic);
  write_be32(lab, static_cast<std::uint32_t>(dataset.size()));
  for (std::size_t y : dataset.labels) {
    if (y > 255) throw FormatError("IDX labels must fit in one byte");
    lab.put(static_cast<char>(y));
  }
}

Dataset load_csv(const std::filesystem::path& path, std::optional<std::size_t> num_classes) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  Dataset out;
  out.provenance = "csv:" + path.filename().string();
  std::string line;
  std::size_t line_no = 0;
  bool have_dim = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("label", 0) == 0) continue;

    std::vector<double> fields;
    std::size_t start = 0;
    while (start <= line.size()) {
      std::size_t end = line.find(',', start);
      if (end == std::string::npos) end = line.size();
      const char* first = line.data() + start;
      const char* last = line.data() + end;
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad numeric field '" +
                          std::string(first, last) + "'");
      }
      fields.push_back(v);
      start = end + 1;
    }
    if (fields.size() < 2) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": need a label and at least one feature");
    }
    const std::size_t dim = fields.size() - 1;
    if (!have_dim) {
      out.dim = dim;
      have_dim = true;
    } else if (dim != out.dim) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": ragged row with " +
                        std::to_string(dim) + " features, expected " + std::to_string(out.dim));
    }
    const double label = fields[0];
    if (label < 0.0 || label != std::floor(label) ||
        (num_classes && label >= static_cast<double>(*num_classes))) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": invalid label " +
                        std::to_string(label));
    }
    out.labels.push_back(static_cast<std::size_t>(label));
    out.features.insert(out.features.end(), fields.begin() + 1, fields.end());
  }
  if (out.labels.empty()) throw FormatError(path.string() + ": no data rows");
  out.num_classes = resolve_classes(out.labels, num_classes);
  return out;
}

void write_csv(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string());
  out << "label";
  for (std::size_t j = 0; j < dataset.dim; ++j) out << ",f" << j;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out << dataset.labels[i];
    for (double v : dataset.row(i)) out << ',' << v;
    out << '\n';
  }
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  nlohmann::json j{{"num_classes", manifest.num_classes}, {"dim", manifest.dim},
                   {"size", manifest.size},           {"provenance", manifest.provenance},
                   {"format", manifest.format},       {"files", manifest.files}};
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string());
  out << j.dump(2) << '\n';
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    Manifest m;
    m.num_classes = j.at("num_classes").get<std::size_t>();
    m.dim = j.at("dim").get<std::size_t>();
    m.size = j.at("size").get<std::size_t>();
    m.provenance = j.value("provenance", "");
    m.format = j.at("format").get<std::string>();
    m.files = j.at("files").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace mea::data
