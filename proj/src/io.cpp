#include "srtrl/io.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>

namespace srtrl {

void write_kruskal(std::ostream& os, const KruskalXd& k) {
  os << "kruskal " << k.order() << '\n';
  if (k.weights()) {
    std::ostringstream line;
    line << std::setprecision(17);
    for (Index r = 0; r < k.rank(); ++r) line << (r ? " " : "") << (*k.weights())(r);
    os << line.str() << '\n';
  } else {
    os << "none\n";
  }
  for (const auto& f : k.factors()) write_matrix(os, f);
}

void write_tucker(std::ostream& os, const TuckerXd& t) {
  os << "tucker " << t.order() << '\n';
  write_tensor(os, t.core());
  for (const auto& f : t.factors()) write_matrix(os, f);
}

void write_weight(std::ostream& os, const Weight<double>& w) {
  if (const auto* k = std::get_if<KruskalXd>(&w))
    write_kruskal(os, *k);
  else
    write_tucker(os, std::get<TuckerXd>(w));
}

namespace {

std::string next_line(std::istream& is, const char* what) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError(std::string("missing ") + what);
  return line;
}

std::vector<MatrixXd> read_factors(std::istream& is, long count) {
  std::vector<MatrixXd> factors;
  for (long k = 0; k < count; ++k) factors.push_back(read_matrix(is));
  return factors;
}

}  // namespace

Weight<double> read_weight(std::istream& is) {
  std::istringstream head(next_line(is, "decomposition header"));
  std::string kind;
  long count = 0;
  if (!(head >> kind >> count) || count < 1) throw ParseError("malformed decomposition header");
  try {
    if (kind == "kruskal") {
      const std::string lambda_line = next_line(is, "lambda line");
      std::optional<VectorXd> lambda;
      if (lambda_line != "none") {
        std::istringstream ss(lambda_line);
        std::vector<double> v;
        double x;
        while (ss >> x) v.push_back(x);
        if (!ss.eof() || v.empty()) throw ParseError("malformed lambda line");
        lambda = Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
      }
      return KruskalXd(read_factors(is, count), std::move(lambda));
    }
    if (kind == "tucker") {
      TensorXd core = read_tensor(is);
      return TuckerXd(std::move(core), read_factors(is, count));
    }
  } catch (const ShapeError& e) {
    throw ParseError(std::string("inconsistent decomposition: ") + e.what());
  }
  throw ParseError("unknown decomposition kind '" + kind + "'");
}

void write_checkpoint(std::ostream& os, const TrlModelXd& model) {
  std::ostringstream head;
  head << std::setprecision(17) << "srtrl-checkpoint scheme=" << to_string(model.sketch.scheme)
       << " theta=" << model.sketch.theta << " scale_mode=" << to_string(model.scale_mode)
       << " tie_modes=" << (model.sketch.tie_modes ? 1 : 0) << " train_lambda=" << (model.train_lambda ? 1 : 0)
       << " shape=";
  const Shape s = full_shape(model.weight);
  for (std::size_t k = 0; k < s.size(); ++k) head << (k ? "," : "") << s[k];
  os << head.str() << '\n';
  write_weight(os, model.weight);
  write_tensor(os, TensorXd({model.bias.size()}, model.bias));
}

TrlModelXd read_checkpoint(std::istream& is) {
  std::istringstream head(next_line(is, "checkpoint header"));
  std::string magic;
  if (!(head >> magic) || magic != "srtrl-checkpoint") throw ParseError("not a checkpoint file");
  std::map<std::string, std::string> fields;
  std::string kv;
  while (head >> kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ParseError("malformed header field '" + kv + "'");
    fields[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  for (const char* key : {"scheme", "theta", "scale_mode", "tie_modes", "train_lambda", "shape"})
    if (!fields.count(key)) throw ParseError(std::string("checkpoint header lacks '") + key + "'");

  TrlModelXd model{read_weight(is), VectorXd(), SketchSpec{}, ScaleMode::inverted, false};
  const TensorXd bias = read_tensor(is);
  if (bias.order() != 1) throw ParseError("bias record must be order 1");
  model.bias = bias.data();
  try {
    model.sketch.scheme = parse_scheme(fields["scheme"]);
    model.sketch.theta = std::stod(fields["theta"]);
    model.scale_mode = parse_scale_mode(fields["scale_mode"]);
    model.sketch.tie_modes = fields["tie_modes"] == "1";
    model.train_lambda = fields["train_lambda"] == "1";
    model.validate();
  } catch (const std::invalid_argument&) {
    throw ParseError("non-numeric theta in checkpoint header");
  } catch (const Error& e) {
    throw ParseError(std::string("invalid checkpoint: ") + e.what());
  }
  std::ostringstream shape;
  const Shape s = full_shape(model.weight);
  for (std::size_t k = 0; k < s.size(); ++k) shape << (k ? "," : "") << s[k];
  if (shape.str() != fields["shape"]) throw ParseError("checkpoint header shape does not match the weight");
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const TrlModelXd& model) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  write_checkpoint(os, model);
}

TrlModelXd load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open " + path.string());
  return read_checkpoint(is);
}

}  // namespace srtrl
