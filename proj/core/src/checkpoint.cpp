#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ddtas/errors.hpp"
#include "ddtas/model.hpp"

namespace ddtas {

namespace {

constexpr const char* kMagic = "ddtas-checkpoint";
constexpr int kVersion = 1;

class LineReader {
 public:
  LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  std::vector<std::string> next_tokens() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      std::istringstream ss(line);
      std::vector<std::string> tokens;
      for (std::string t; ss >> t;) tokens.push_back(t);
      if (!tokens.empty()) return tokens;
    }
    fail("unexpected end of file");
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(source_, line_no_, msg); }

  long expect_int(const std::string& token) const {
    char* end = nullptr;
    errno = 0;
    const long v = std::strtol(token.c_str(), &end, 10);
    if (errno != 0 || end == token.c_str() || *end != '\0') fail("expected integer, got '" + token + "'");
    return v;
  }

  double expect_real(const std::string& token) const { return parse_real(token, source_, line_no_); }

  void expect_keyword(const std::vector<std::string>& tokens, const std::string& kw,
                      std::size_t arity) const {
    if (tokens.empty() || tokens[0] != kw || tokens.size() != arity + 1) {
      fail("expected '" + kw + "' with " + std::to_string(arity) + " value(s)");
    }
  }

  const std::string& source() const { return source_; }
  std::size_t line() const { return line_no_; }

 private:
  std::istream& in_;
  std::string source_;
  std::size_t line_no_ = 0;
};

void read_row(LineReader& reader, double* dst, Eigen::Index count, Eigen::Index stride) {
  const auto tokens = reader.next_tokens();
  if (static_cast<Eigen::Index>(tokens.size()) != count) {
    reader.fail("expected " + std::to_string(count) + " values, got " + std::to_string(tokens.size()));
  }
  for (Eigen::Index j = 0; j < count; ++j) dst[j * stride] = reader.expect_real(tokens[j]);
}

}  // namespace

void write_real(std::ostream& out, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", value);
  out << buf;
}

double parse_real(const std::string& token, const std::string& source, std::size_t line) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0' || errno == ERANGE) {
    throw ParseError(source, line, "expected real number, got '" + token + "'");
  }
  return v;
}

void write_checkpoint(std::ostream& out, const EmbeddingNet& net, double lambda) {
  out << kMagic << ' ' << kVersion << '\n';
  out << "lambda ";
  write_real(out, lambda);
  out << "\nnorm_floor ";
  write_real(out, net.norm_floor());
  out << "\ndims " << net.layer_dims().size();
  for (int d : net.layer_dims()) out << ' ' << d;
  out << '\n';
  for (std::size_t k = 0; k < net.num_layers(); ++k) {
    const auto& l = net.layers()[k];
    out << "layer " << k << " weight " << l.weight.rows() << ' ' << l.weight.cols() << '\n';
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) {
        if (j) out << ' ';
        write_real(out, l.weight(i, j));
      }
      out << '\n';
    }
    out << "layer " << k << " bias " << l.bias.size() << '\n';
    for (Eigen::Index j = 0; j < l.bias.size(); ++j) {
      if (j) out << ' ';
      write_real(out, l.bias[j]);
    }
    out << '\n';
  }
  out << "end\n";
}

Checkpoint read_checkpoint(std::istream& in, const std::string& source_name) {
  LineReader reader(in, source_name);

  auto header = reader.next_tokens();
  if (header.size() != 2 || header[0] != kMagic) reader.fail("not a ddtas checkpoint");
  if (reader.expect_int(header[1]) != kVersion) reader.fail("unsupported checkpoint version " + header[1]);

  auto tokens = reader.next_tokens();
  reader.expect_keyword(tokens, "lambda", 1);
  const double lambda = reader.expect_real(tokens[1]);

  tokens = reader.next_tokens();
  reader.expect_keyword(tokens, "norm_floor", 1);
  const double floor = reader.expect_real(tokens[1]);

  tokens = reader.next_tokens();
  if (tokens.size() < 2 || tokens[0] != "dims") reader.fail("expected 'dims'");
  const long n_dims = reader.expect_int(tokens[1]);
  if (n_dims < 2 || static_cast<std::size_t>(n_dims) + 2 != tokens.size()) reader.fail("bad dims line");
  std::vector<int> dims;
  for (long i = 0; i < n_dims; ++i) {
    const long d = reader.expect_int(tokens[static_cast<std::size_t>(i) + 2]);
    if (d <= 0) reader.fail("layer dims must be positive");
    dims.push_back(static_cast<int>(d));
  }

  Checkpoint ckpt{EmbeddingNet(dims), lambda};
  try {
    ckpt.net.set_norm_floor(floor);
  } catch (const std::invalid_argument& e) {
    reader.fail(e.what());
  }

  for (std::size_t k = 0; k < ckpt.net.num_layers(); ++k) {
    auto& l = ckpt.net.layers()[k];
    tokens = reader.next_tokens();
    if (tokens.size() != 5 || tokens[0] != "layer" || tokens[2] != "weight" ||
        reader.expect_int(tokens[1]) != static_cast<long>(k) ||
        reader.expect_int(tokens[3]) != l.weight.rows() || reader.expect_int(tokens[4]) != l.weight.cols()) {
      reader.fail("bad weight header for layer " + std::to_string(k));
    }
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
      read_row(reader, l.weight.data() + i, l.weight.cols(), l.weight.rows());
    }
    tokens = reader.next_tokens();
    if (tokens.size() != 4 || tokens[0] != "layer" || tokens[2] != "bias" ||
        reader.expect_int(tokens[1]) != static_cast<long>(k) || reader.expect_int(tokens[3]) != l.bias.size()) {
      reader.fail("bad bias header for layer " + std::to_string(k));
    }
    read_row(reader, l.bias.data(), l.bias.size(), 1);
  }

  tokens = reader.next_tokens();
  if (tokens.size() != 1 || tokens[0] != "end") reader.fail("expected 'end'");
  if (!ckpt.net.all_finite()) reader.fail("non-finite parameter");
  return ckpt;
}

void save_checkpoint(const EmbeddingNet& net, double lambda, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  write_checkpoint(out, net, lambda);
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  return read_checkpoint(in, path.string());
}

}  // namespace ddtas
