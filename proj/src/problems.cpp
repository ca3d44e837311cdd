#include "otsns/problems.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace otsns {

namespace {

constexpr std::string_view kFormatTag = "f64le-rowmajor-v1";
constexpr std::string_view kHeaderSuffix = ".otp.json";

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Vector uniform_marginal(std::size_t n) { return Vector(n, 1.0 / static_cast<double>(n)); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return buf.str();
}

// Whitespace tokenizer that tracks 1-based line/column and skips # comments.
class Tokenizer {
 public:
  Tokenizer(std::string_view text, std::string_view source) : text_(text), source_(source) {}

  struct Token {
    std::string_view text;
    std::size_t line;
    std::size_t column;
  };

  bool next(Token& token) {
    while (pos_ < text_.size()) {
      const char ch = text_[pos_];
      if (ch == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        advance();
      } else {
        break;
      }
    }
    if (pos_ >= text_.size()) return false;
    token.line = line_;
    token.column = column_;
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) &&
           text_[pos_] != '#') {
      advance();
    }
    token.text = text_.substr(start, pos_ - start);
    return true;
  }

  Token expect(std::string_view what) {
    Token t;
    if (!next(t)) throw ParseError(std::string(source_), line_, column_, "missing " + std::string(what));
    return t;
  }

  std::string source() const { return std::string(source_); }

 private:
  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }

  std::string_view text_;
  std::string_view source_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t column_ = 1;
};

std::size_t parse_count(const Tokenizer& tk, const Tokenizer::Token& t, std::string_view what) {
  std::size_t v = 0;
  const auto [end, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
  if (ec != std::errc() || end != t.text.data() + t.text.size() || v == 0) {
    throw ParseError(tk.source(), t.line, t.column,
                     "expected positive integer " + std::string(what) + ", got '" +
                         std::string(t.text) + "'");
  }
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

void write_le_doubles(std::ostream& out, std::span<const double> values) {
  std::vector<unsigned char> bytes(values.size() * 8);
  for (std::size_t k = 0; k < values.size(); ++k) {
    const auto bits = std::bit_cast<std::uint64_t>(values[k]);
    for (int b = 0; b < 8; ++b) bytes[k * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void read_le_doubles(std::string_view bytes, std::span<double> values) {
  for (std::size_t k = 0; k < values.size(); ++k) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[k * 8 + b])) << (8 * b);
    }
    values[k] = std::bit_cast<double>(bits);
  }
}

std::string stem_of(const std::filesystem::path& path) {
  const std::string name = path.filename().string();
  if (name.size() <= kHeaderSuffix.size() || !name.ends_with(kHeaderSuffix)) {
    throw ValidationError("problem files must be named <name>.otp.json, got " + name);
  }
  return name.substr(0, name.size() - kHeaderSuffix.size());
}

}  // namespace

GridMetric parse_grid_metric(std::string_view name) {
  if (name == "l1") return GridMetric::l1;
  if (name == "l2sq") return GridMetric::l2_squared;
  throw ValidationError("unknown metric '" + std::string(name) + "' (expected l1 or l2sq)");
}

Problem gen_random_assignment(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ValidationError("gen_random_assignment: n must be at least 1");
  std::mt19937_64 rng(seed);
  Problem p;
  p.cost = Matrix(n, n);
  for (double& v : p.cost.values()) v = unit_uniform(rng);
  p.row_marginal = uniform_marginal(n);
  p.col_marginal = uniform_marginal(n);
  return p;
}

Problem gen_rank_one(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ValidationError("gen_rank_one: n must be at least 1");
  std::mt19937_64 rng(seed);
  Vector a(n), b(n);
  for (double& v : a) v = unit_uniform(rng);
  for (double& v : b) v = unit_uniform(rng);
  Problem p;
  p.cost = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) p.cost(i, j) = a[i] + b[j];
  }
  p.row_marginal = uniform_marginal(n);
  p.col_marginal = uniform_marginal(n);
  return p;
}

Matrix grid_cost(std::size_t width, std::size_t height, GridMetric metric) {
  if (width == 0 || height == 0) throw ValidationError("grid_cost: empty grid");
  const std::size_t m = width * height;
  const double s = static_cast<double>(std::max(width, height));
  Matrix cost(m, m);
  for (std::size_t p = 0; p < m; ++p) {
    const double pi = static_cast<double>(p / width) / s;
    const double pj = static_cast<double>(p % width) / s;
    for (std::size_t q = 0; q < m; ++q) {
      const double di = pi - static_cast<double>(q / width) / s;
      const double dj = pj - static_cast<double>(q % width) / s;
      cost(p, q) = metric == GridMetric::l1 ? std::fabs(di) + std::fabs(dj) : di * di + dj * dj;
    }
  }
  return cost;
}

Vector image_to_marginal(const ImageGrid& image, double smoothing_eps) {
  if (!(smoothing_eps >= 0.0)) throw ValidationError("image_to_marginal: smoothing must be >= 0");
  const std::size_t m = image.width * image.height;
  if (m == 0 || image.intensities.size() != m) {
    throw ValidationError("image_to_marginal: grid size does not match its intensities");
  }
  const double add = smoothing_eps / static_cast<double>(m);
  Vector out(m);
  double total = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double v = image.intensities[k];
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ValidationError("image_to_marginal: intensities must be finite and non-negative");
    }
    out[k] = v + add;
    total += out[k];
  }
  if (!(total > 0.0)) throw ValidationError("image_to_marginal: image has no mass");
  for (double& v : out) v /= total;
  return out;
}

ImageGrid gaussian_image(std::size_t width, std::size_t height,
                         std::span<const GaussianBlob> blobs) {
  ImageGrid img{width, height, Vector(width * height, 0.0)};
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      double v = 0.0;
      for (const auto& b : blobs) {
        const double di = static_cast<double>(i) - b.row;
        const double dj = static_cast<double>(j) - b.col;
        v += b.weight * std::exp(-(di * di + dj * dj) / (2.0 * b.sigma * b.sigma));
      }
      img.at(i, j) = v;
    }
  }
  return img;
}

Problem image_pair_problem(const ImageGrid& a, const ImageGrid& b, GridMetric metric,
                           double smoothing_eps, double eta) {
  if (a.width != b.width || a.height != b.height) {
    throw ValidationError("image pair: dimensions differ (" + std::to_string(a.width) + "x" +
                          std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                          std::to_string(b.height) + ")");
  }
  Problem p;
  p.cost = grid_cost(a.width, a.height, metric);
  p.row_marginal = image_to_marginal(a, smoothing_eps);
  p.col_marginal = image_to_marginal(b, smoothing_eps);
  p.eta = eta;
  return p;
}

ImageGrid parse_pgm(std::string_view text, std::string_view source) {
  Tokenizer tk(text, source);
  const auto magic = tk.expect("PGM magic number");
  if (magic.text != "P2") {
    throw ParseError(tk.source(), magic.line, magic.column,
                     "expected plain PGM magic 'P2', got '" + std::string(magic.text) + "'");
  }
  ImageGrid img;
  img.width = parse_count(tk, tk.expect("width"), "width");
  img.height = parse_count(tk, tk.expect("height"), "height");
  const std::size_t maxval = parse_count(tk, tk.expect("maxval"), "maxval");
  img.intensities.resize(img.width * img.height);
  for (double& v : img.intensities) {
    const auto t = tk.expect("pixel value");
    std::size_t value = 0;
    const auto [end, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), value);
    if (ec != std::errc() || end != t.text.data() + t.text.size() || value > maxval) {
      throw ParseError(tk.source(), t.line, t.column,
                       "invalid pixel value '" + std::string(t.text) + "'");
    }
    v = static_cast<double>(value);
  }
  Tokenizer::Token extra;
  if (tk.next(extra)) {
    throw ParseError(tk.source(), extra.line, extra.column,
                     "dimension mismatch: more pixels than " + std::to_string(img.width) + "x" +
                         std::to_string(img.height));
  }
  return img;
}

ImageGrid parse_csv_grid(std::string_view text, std::string_view source) {
  ImageGrid img;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t stop = text.find('\n', start);
    if (stop == std::string_view::npos) stop = text.size();
    std::string_view line = text.substr(start, stop - start);
    ++line_no;
    start = stop + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) {
      if (stop == text.size()) break;
      continue;
    }
    std::size_t cells = 0;
    std::size_t cell_start = 0;
    while (true) {
      std::size_t comma = line.find(',', cell_start);
      const bool last = comma == std::string_view::npos;
      if (last) comma = line.size();
      const std::string_view raw = line.substr(cell_start, comma - cell_start);
      const std::string_view cell = trim(raw);
      const std::size_t column = cell_start + 1 + static_cast<std::size_t>(cell.data() - raw.data());
      double value = 0.0;
      const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (cell.empty() || ec != std::errc() || end != cell.data() + cell.size() ||
          !std::isfinite(value)) {
        throw ParseError(std::string(source), line_no, column,
                         "non-numeric cell '" + std::string(cell) + "'");
      }
      if (value < 0.0) {
        throw ParseError(std::string(source), line_no, column,
                         "negative intensity " + std::string(cell));
      }
      img.intensities.push_back(value);
      ++cells;
      if (last) break;
      cell_start = comma + 1;
    }
    if (img.height == 0) {
      img.width = cells;
    } else if (cells != img.width) {
      throw ParseError(std::string(source), line_no, 1,
                       "dimension mismatch: row has " + std::to_string(cells) +
                           " cells, expected " + std::to_string(img.width));
    }
    ++img.height;
    if (stop == text.size()) break;
  }
  if (img.height == 0) throw ParseError(std::string(source), 1, 1, "empty grid");
  return img;
}

ImageGrid load_image(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext == ".pgm" ? parse_pgm(text, path.string()) : parse_csv_grid(text, path.string());
}

void save_problem(const Problem& problem, const std::filesystem::path& path,
                  const ProblemMetadata& metadata) {
  validate(problem);
  const std::string stem = stem_of(path);
  const std::string bin_name = stem + ".otp.bin";

  nlohmann::json header;
  header["n"] = problem.size();
  header["eta"] = problem.eta;
  header["cost"] = bin_name;
  header["r"] = problem.row_marginal;
  header["c"] = problem.col_marginal;
  header["format"] = kFormatTag;
  if (!metadata.empty()) header["meta"] = metadata;

  const auto bin_path = path.parent_path() / bin_name;
  {
    std::ofstream out(bin_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + bin_path.string());
    write_le_doubles(out, problem.cost.values());
    if (!out) throw IoError("write failed: " + bin_path.string());
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << header.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

nlohmann::json parse_header(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // byte offset -> line/column
    std::size_t line = 1, column = 1;
    for (std::size_t k = 0; k + 1 < e.byte && k < text.size(); ++k) {
      if (text[k] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ParseError(path.string(), line, column, "malformed problem header");
  }
}

}  // namespace

ProblemMetadata load_problem_metadata(const std::filesystem::path& path) {
  const nlohmann::json header = parse_header(path);
  ProblemMetadata meta;
  if (auto it = header.find("meta"); it != header.end()) {
    try {
      meta = it->get<ProblemMetadata>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string(), 1, 1, std::string("bad metadata: ") + e.what());
    }
  }
  return meta;
}

Problem load_problem(const std::filesystem::path& path) {
  const nlohmann::json header = parse_header(path);
  Problem p;
  std::size_t n = 0;
  std::string bin_name;
  try {
    if (header.at("format").get<std::string>() != kFormatTag) {
      throw ValidationError(path.string() + ": unsupported format '" +
                            header.at("format").get<std::string>() + "'");
    }
    n = header.at("n").get<std::size_t>();
    p.eta = header.at("eta").get<double>();
    bin_name = header.at("cost").get<std::string>();
    p.row_marginal = header.at("r").get<Vector>();
    p.col_marginal = header.at("c").get<Vector>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), 1, 1, std::string("bad problem header: ") + e.what());
  }
  if (p.row_marginal.size() != n || p.col_marginal.size() != n) {
    throw ValidationError(path.string() + ": marginal lengths do not match n = " +
                          std::to_string(n));
  }
  const auto bin_path = path.parent_path() / bin_name;
  const std::string bytes = read_file(bin_path);
  if (bytes.size() != 8 * n * n) {
    throw ValidationError(bin_path.string() + ": expected " + std::to_string(8 * n * n) +
                          " bytes, found " + std::to_string(bytes.size()));
  }
  p.cost = Matrix(n, n);
  read_le_doubles(bytes, p.cost.values());
  validate(p);
  return p;
}

}  // namespace otsns
