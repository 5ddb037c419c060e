#include "gradsurgeon/checkpoint.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gradsurgeon/error.hpp"

namespace gradsurgeon {

namespace {

constexpr const char* kMagic = "gradsurgeon-checkpoint";
constexpr int kVersion = 1;

void write_values(std::ostream& out, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out << ' ';
    out << format_double(values[i]);
  }
  out << '\n';
}

void write_encoder(std::ostream& out, const char* name, const MlpEncoder& enc) {
  out << "encoder " << name << ' ' << enc.layers().size() << '\n';
  for (const auto& layer : enc.layers()) {
    out << "layer " << layer.weight.rows() << ' ' << layer.weight.cols() << '\n';
    write_values(out, layer.weight.span());
    write_values(out, layer.bias.span());
  }
}

void write_head(std::ostream& out, const char* name, const LinearHead& head) {
  out << "head " << name << ' ' << head.dim() << ' ' << (head.frozen ? 1 : 0) << ' '
      << format_double(head.b) << '\n';
  write_values(out, head.w.span());
}

class Tokens {
 public:
  explicit Tokens(std::string text) : text_(std::move(text)) {}

  std::string_view next() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ >= text_.size()) throw ValidationError("checkpoint: unexpected end of file");
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return std::string_view(text_).substr(start, pos_ - start);
  }

  void expect(std::string_view word) {
    const auto got = next();
    if (got != word) {
      throw ValidationError("checkpoint: expected '" + std::string(word) + "', got '" +
                            std::string(got) + "'");
    }
  }

  std::size_t size() { return static_cast<std::size_t>(parse_uint(next(), "checkpoint")); }
  double real() { return parse_double(next(), "checkpoint"); }

  std::vector<double> reals(std::size_t n) {
    std::vector<double> out(n);
    for (auto& v : out) v = real();
    return out;
  }

 private:
  std::string text_;
  std::size_t pos_ = 0;
};

MlpEncoder read_encoder(Tokens& tok, std::string_view name) {
  tok.expect("encoder");
  tok.expect(name);
  const std::size_t n_layers = tok.size();
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i < n_layers; ++i) {
    tok.expect("layer");
    const std::size_t rows = tok.size();
    const std::size_t cols = tok.size();
    Mat64 weight(rows, cols, tok.reals(rows * cols));
    Vec64 bias(tok.reals(rows));
    layers.push_back(DenseLayer{std::move(weight), std::move(bias)});
  }
  return MlpEncoder(std::move(layers));
}

LinearHead read_head(Tokens& tok, std::string_view name) {
  tok.expect("head");
  tok.expect(name);
  const std::size_t dim = tok.size();
  const std::size_t frozen = tok.size();
  if (frozen > 1) throw ValidationError("checkpoint: frozen flag must be 0 or 1");
  LinearHead head;
  head.b = tok.real();
  head.w = Vec64(tok.reals(dim));
  head.frozen = frozen == 1;
  return head;
}

}  // namespace

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ostringstream out;
  out << kMagic << ' ' << kVersion << '\n';
  const auto echo = echo_config(ckpt.config);
  out << "config " << echo.size() << '\n';
  for (const auto& [k, v] : echo) out << k << " = " << v << '\n';

  const auto& m = ckpt.model;
  write_encoder(out, "student_base", m.student.base);
  write_encoder(out, "teacher_base", m.teacher.base);
  const auto& ad = m.student.adapter;
  out << "adapter " << ad.rank << ' ' << format_double(ad.alpha) << ' '
      << format_double(ad.dropout_rate) << ' ' << ad.dim() << '\n';
  write_values(out, ad.a.span());
  write_values(out, ad.b.span());
  write_head(out, "img", m.head_img);
  write_head(out, "text", m.head_text);
  write_head(out, "teacher", m.head_teacher);
  out << "end\n";

  std::ofstream file(path, std::ios::binary);
  if (!file) throw ValidationError("cannot open '" + path.string() + "' for writing");
  file << out.str();
  if (!file) throw ValidationError("failed writing '" + path.string() + "'");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw ValidationError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream buf;
  buf << file.rdbuf();
  Tokens tok(buf.str());

  tok.expect(kMagic);
  if (tok.size() != kVersion) throw ValidationError("checkpoint: unsupported version");

  Checkpoint ckpt;
  tok.expect("config");
  const std::size_t n_keys = tok.size();
  for (std::size_t i = 0; i < n_keys; ++i) {
    const std::string key(tok.next());
    tok.expect("=");
    set_config_value(ckpt.config, key, tok.next());
  }

  auto& m = ckpt.model;
  m.student.base = read_encoder(tok, "student_base");
  m.teacher.base = read_encoder(tok, "teacher_base");

  tok.expect("adapter");
  auto& ad = m.student.adapter;
  ad.rank = tok.size();
  ad.alpha = tok.real();
  ad.dropout_rate = tok.real();
  const std::size_t d = tok.size();
  if (ad.rank == 0 || d == 0) throw ValidationError("checkpoint: adapter shape must be positive");
  ad.a = Mat64(ad.rank, d, tok.reals(ad.rank * d));
  ad.b = Mat64(d, ad.rank, tok.reals(d * ad.rank));

  m.head_img = read_head(tok, "img");
  m.head_text = read_head(tok, "text");
  m.head_teacher = read_head(tok, "teacher");
  tok.expect("end");

  require_same_dim("checkpoint adapter", d, m.student.base.output_dim());
  require_same_dim("checkpoint image head", m.head_img.dim(), d);
  require_same_dim("checkpoint teacher head", m.head_teacher.dim(), m.teacher.base.output_dim());
  return ckpt;
}

}  // namespace gradsurgeon
