#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lasforge/errors.hpp"
#include "lasforge/networks.hpp"

namespace lasforge {

// lasforge-params 1
// count <entries>
// tensor <name> <rank> <dim>...
// <values, space separated, %.17g>
void save_params(const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << "lasforge-params 1\n";
  out << "count " << params.count() << '\n';
  char buf[32];
  for (const auto& e : params.entries()) {
    out << "tensor " << e.name << ' ' << e.value.rank();
    for (std::size_t d : e.value.shape) out << ' ' << d;
    out << '\n';
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", e.value.data[i]);
      out << (i ? " " : "") << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for checkpoint " + path.string());
}

ModelParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  auto fail = [&](const std::string& why) -> IoError {
    return IoError("checkpoint " + path.string() + ": " + why);
  };
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "lasforge-params" || version != 1) {
    throw fail("missing 'lasforge-params 1' header");
  }
  std::string word;
  std::size_t count = 0;
  if (!(in >> word >> count) || word != "count") throw fail("missing entry count");
  ModelParams params;
  for (std::size_t e = 0; e < count; ++e) {
    std::string name;
    std::size_t rank = 0;
    if (!(in >> word >> name >> rank) || word != "tensor" || rank == 0) {
      throw fail("malformed tensor header for entry " + std::to_string(e));
    }
    Shape shape(rank);
    for (auto& d : shape) {
      if (!(in >> d) || d == 0) throw fail("bad dimension in " + name);
    }
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) {
      std::string token;
      if (!(in >> token)) throw fail("truncated values in " + name);
      const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
      if (ec != std::errc() || ptr != token.data() + token.size()) {
        throw fail("cannot parse value '" + token + "' in " + name);
      }
    }
    params.add(name, Tensor(std::move(shape), std::move(values)));
  }
  return params;
}

}  // namespace lasforge
