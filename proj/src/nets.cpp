#include "dicap/nets.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace dicap {

namespace {

void fill_uniform_fanin(MatXd& m, int fan_in, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = dist(rng);
}

}  // namespace

LstmParams make_lstm(int in_dim, int hidden, Rng& rng) {
  if (in_dim < 1 || hidden < 1)
    throw std::invalid_argument("make_lstm: dimensions must be positive");
  LstmParams p;
  p.in_dim = in_dim;
  p.hidden = hidden;
  p.w.resize(4 * hidden, in_dim + hidden);
  fill_uniform_fanin(p.w, in_dim + hidden, rng);
  p.b = MatXd::Zero(4 * hidden, 1);
  p.b.block(hidden, 0, hidden, 1).setOnes();  // forget gate starts open
  return p;
}

std::vector<MatXd*> MlpParams::params() {
  std::vector<MatXd*> out;
  for (std::size_t l = 0; l < w.size(); ++l) {
    out.push_back(&w[l]);
    out.push_back(&b[l]);
  }
  return out;
}

std::vector<std::pair<std::string, MatXd*>> MlpParams::named(
    const std::string& prefix) {
  std::vector<std::pair<std::string, MatXd*>> out;
  for (std::size_t l = 0; l < w.size(); ++l) {
    out.emplace_back(prefix + ".w" + std::to_string(l), &w[l]);
    out.emplace_back(prefix + ".b" + std::to_string(l), &b[l]);
  }
  return out;
}

MlpParams make_mlp(std::vector<int> widths, Act hidden_act, Act out_act, Rng& rng) {
  if (widths.size() < 2)
    throw std::invalid_argument("make_mlp: need at least input and output widths");
  MlpParams p;
  p.hidden_act = hidden_act;
  p.out_act = out_act;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    if (widths[l] < 1 || widths[l + 1] < 1)
      throw std::invalid_argument("make_mlp: widths must be positive");
    MatXd w(widths[l + 1], widths[l]);
    fill_uniform_fanin(w, widths[l], rng);
    p.w.push_back(std::move(w));
    p.b.push_back(MatXd::Zero(widths[l + 1], 1));
  }
  p.widths = std::move(widths);
  return p;
}

VecXd softmax_pmf(const VecXd& phi) {
  if (phi.size() < 2)
    throw std::invalid_argument("softmax_pmf: need at least 2 logits");
  if (!phi.allFinite())
    throw ad::NumericError("softmax_pmf: non-finite logits");
  Eigen::ArrayXd e = (phi.array() - phi.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

MatXd one_hot(int i, int n) {
  if (i < 0 || i >= n)
    throw std::invalid_argument("one_hot: index out of range");
  MatXd e = MatXd::Zero(n, 1);
  e(i, 0) = 1.0;
  return e;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kMagic[8] = {'D', 'I', 'C', 'A', 'P', 'M', 'D', 'L'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void save_model(const std::string& path, const NamedParams& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_model: cannot open " + path);
  os.write(kMagic, 8);
  write_u32(os, kVersion);
  write_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, tensor] : params) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(tensor->rows()));
    write_u32(os, static_cast<std::uint32_t>(tensor->cols()));
    for (Eigen::Index r = 0; r < tensor->rows(); ++r)
      for (Eigen::Index c = 0; c < tensor->cols(); ++c) {
        double v = (*tensor)(r, c);
        os.write(reinterpret_cast<const char*>(&v), sizeof(double));
      }
  }
  if (!os) throw std::runtime_error("save_model: write failed for " + path);
}

void load_model(const std::string& path, const NamedParams& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_model: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != std::string(kMagic, 8))
    throw std::runtime_error("load_model: bad magic in " + path);
  std::uint32_t version = read_u32(is);
  if (version != kVersion)
    throw std::runtime_error("load_model: unsupported version " +
                             std::to_string(version));
  std::uint32_t count = read_u32(is);
  if (count != params.size())
    throw std::runtime_error("load_model: expected " +
                             std::to_string(params.size()) + " tensors, file has " +
                             std::to_string(count));
  for (const auto& [name, tensor] : params) {
    std::uint32_t name_len = read_u32(is);
    std::string file_name(name_len, '\0');
    is.read(file_name.data(), name_len);
    if (file_name != name)
      throw std::runtime_error("load_model: expected tensor '" + name +
                               "', file has '" + file_name + "'");
    std::uint32_t rows = read_u32(is), cols = read_u32(is);
    if (rows != static_cast<std::uint32_t>(tensor->rows()) ||
        cols != static_cast<std::uint32_t>(tensor->cols()))
      throw std::runtime_error("load_model: shape mismatch for '" + name + "'");
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) {
        double v;
        is.read(reinterpret_cast<char*>(&v), sizeof(double));
        (*tensor)(r, c) = v;
      }
  }
  if (!is) throw std::runtime_error("load_model: truncated file " + path);
}

}  // namespace dicap
