#pragma once

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "windcast/error.hpp"
#include "windcast/tensor_store.hpp"

namespace windcast {

inline constexpr int archive_version = 1;

/// Self-describing model file: a type tag, flat key/value settings and named
/// tensors with shape headers. Values are written as hex floats so a
/// save/load round trip is bit-exact.
///
///   windcast-archive 1
///   type transformer
///   set embed_dim 32
///   tensor embed.weight 32 1
///   0x1.5p-3 ...
///   end
struct Archive {
  struct Tensor {
    std::string name;
    std::size_t rows = 0, cols = 0;
    std::vector<double> values;  // column-major
  };

  std::string type;
  std::map<std::string, std::string> settings;
  std::vector<Tensor> tensors;

  const std::string& get(const std::string& key) const {
    auto it = settings.find(key);
    if (it == settings.end()) throw DataError("archive: missing setting '" + key + "'");
    return it->second;
  }

  const Tensor& tensor(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t;
    throw DataError("archive: missing tensor '" + name + "'");
  }

  void add_store(const TensorStore& store) {
    for (std::size_t i = 0; i < store.entries().size(); ++i) {
      const auto& e = store.entries()[i];
      const auto* p = store.data().data() + e.offset;
      tensors.push_back({e.name, e.rows, e.cols, std::vector<double>(p, p + e.size())});
    }
  }

  /// Copies tensors into a store of identical layout.
  void fill_store(TensorStore& store) const {
    for (std::size_t i = 0; i < store.entries().size(); ++i) {
      const auto& e = store.entries()[i];
      const Tensor& t = tensor(e.name);
      if (t.rows != e.rows || t.cols != e.cols)
        throw DataError("archive: tensor '" + e.name + "' has shape " + std::to_string(t.rows) +
                        "x" + std::to_string(t.cols) + ", expected " + std::to_string(e.rows) +
                        "x" + std::to_string(e.cols));
      std::copy(t.values.begin(), t.values.end(), store.data().begin() + e.offset);
    }
    if (tensors.size() != store.entries().size())
      throw DataError("archive: unexpected extra tensors");
  }
};

inline std::string hex_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double parse_hex_double(const std::string& s) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || errno == ERANGE)
    throw DataError("archive: bad number '" + s + "'");
  return v;
}

inline void write_archive(std::ostream& out, const Archive& a) {
  out << "windcast-archive " << archive_version << '\n';
  out << "type " << a.type << '\n';
  for (const auto& [k, v] : a.settings) out << "set " << k << ' ' << v << '\n';
  for (const auto& t : a.tensors) {
    out << "tensor " << t.name << ' ' << t.rows << ' ' << t.cols << '\n';
    for (std::size_t i = 0; i < t.values.size(); ++i)
      out << (i ? " " : "") << hex_double(t.values[i]);
    out << '\n';
  }
  out << "end\n";
  if (!out) throw Error("archive: write failed");
}

inline Archive read_archive(std::istream& in) {
  Archive a;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    throw DataError("archive line " + std::to_string(line_no) + ": " + why);
  };
  auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    return true;
  };

  if (!next()) fail("empty archive");
  {
    std::istringstream hs(line);
    std::string magic;
    int version = 0;
    if (!(hs >> magic >> version) || magic != "windcast-archive") fail("not a windcast archive");
    if (version != archive_version)
      fail("unsupported archive version " + std::to_string(version));
  }
  bool ended = false;
  while (next()) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "type") {
      ls >> a.type;
    } else if (word == "set") {
      std::string key, value;
      ls >> key;
      std::getline(ls >> std::ws, value);
      if (key.empty()) fail("setting without a key");
      a.settings[key] = value;
    } else if (word == "tensor") {
      Archive::Tensor t;
      if (!(ls >> t.name >> t.rows >> t.cols)) fail("bad tensor header");
      if (!next()) fail("missing tensor values");
      std::istringstream vs(line);
      std::string tok;
      while (vs >> tok) t.values.push_back(parse_hex_double(tok));
      if (t.values.size() != t.rows * t.cols)
        fail("tensor '" + t.name + "' has " + std::to_string(t.values.size()) + " values, expected " +
             std::to_string(t.rows * t.cols));
      a.tensors.push_back(std::move(t));
    } else if (word == "end") {
      ended = true;
      break;
    } else if (!word.empty()) {
      fail("unknown record '" + word + "'");
    }
  }
  if (!ended) fail("truncated archive");
  if (a.type.empty()) fail("missing type");
  return a;
}

inline void save_archive(const std::string& path, const Archive& a) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_archive(out, a);
}

inline Archive load_archive(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_archive(in);
}

}  // namespace windcast
