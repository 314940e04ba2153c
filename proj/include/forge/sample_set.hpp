#pragma once

// n samples in R^d with provenance. Stored as CSV (provenance as leading
// "# key=value" comment rows, then a header of coordinate names) or as raw
// little-endian float64 with a JSON sidecar.

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/error.hpp"

namespace forge {

struct SampleSet {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> values;  // row-major, n x d
  std::map<std::string, std::string> provenance;

  SampleSet() = default;
  SampleSet(std::size_t rows, std::size_t dim) : n(rows), d(dim), values(rows * dim, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return values[i * d + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * d + j]; }
  const double* row(std::size_t i) const { return values.data() + i * d; }
  double* row(std::size_t i) { return values.data() + i * d; }

  void push_back(const std::vector<double>& x) {
    if (n == 0 && d == 0) d = x.size();
    detail::require(x.size() == d, "sample dimension mismatch");
    values.insert(values.end(), x.begin(), x.end());
    ++n;
  }

  std::vector<double> column(std::size_t j) const {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = at(i, j);
    return out;
  }

  // First `count` rows.
  SampleSet head(std::size_t count) const {
    detail::require(count <= n, "head larger than the sample set");
    SampleSet out(count, d);
    std::copy(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(count * d), out.values.begin());
    out.provenance = provenance;
    return out;
  }
};

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline void write_csv(const SampleSet& s, std::ostream& out) {
  for (const auto& [key, value] : s.provenance) out << "# " << key << "=" << value << "\n";
  for (std::size_t j = 0; j < s.d; ++j) out << (j ? "," : "") << "x" << j;
  out << "\n";
  for (std::size_t i = 0; i < s.n; ++i) {
    for (std::size_t j = 0; j < s.d; ++j) out << (j ? "," : "") << format_double(s.at(i, j));
    out << "\n";
  }
}

inline void write_csv_file(const SampleSet& s, const std::string& path) {
  std::ofstream out(path);
  detail::require(static_cast<bool>(out), "cannot write " + path);
  write_csv(s, out);
}

inline SampleSet read_csv(std::istream& in) {
  SampleSet s;
  std::string line;
  bool header_seen = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto body = line.substr(line.find_first_not_of("# "));
      const auto eq = body.find('=');
      if (eq != std::string::npos) s.provenance[body.substr(0, eq)] = body.substr(eq + 1);
      continue;
    }
    if (!header_seen) {
      header_seen = true;
      s.d = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
      continue;
    }
    std::size_t count = 0;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p <= end) {
      double v = 0.0;
      const auto res = std::from_chars(p, end, v);
      detail::require(res.ec == std::errc(), "line " + std::to_string(line_no) + ": malformed number");
      s.values.push_back(v);
      ++count;
      p = res.ptr;
      if (p == end) break;
      detail::require(*p == ',', "line " + std::to_string(line_no) + ": expected ','");
      ++p;
    }
    detail::require(count == s.d, "line " + std::to_string(line_no) + ": expected " + std::to_string(s.d) + " values");
    ++s.n;
  }
  detail::require(header_seen, "CSV has no header row");
  return s;
}

inline SampleSet read_csv_file(const std::string& path) {
  std::ifstream in(path);
  detail::require(static_cast<bool>(in), "cannot open " + path);
  return read_csv(in);
}

// Writes <path> (raw float64, little-endian) and <path>.json.
inline void write_binary(const SampleSet& s, const std::string& path) {
  static_assert(std::endian::native == std::endian::little, "binary sample files assume a little-endian host");
  std::ofstream out(path, std::ios::binary);
  detail::require(static_cast<bool>(out), "cannot write " + path);
  out.write(reinterpret_cast<const char*>(s.values.data()), static_cast<std::streamsize>(s.values.size() * sizeof(double)));
  nlohmann::json side = {{"schema", "forge.samples"}, {"version", 1}, {"n", s.n}, {"d", s.d}, {"dtype", "float64"},
                         {"endianness", "little"}, {"layout", "row-major"}, {"provenance", s.provenance}};
  std::ofstream meta(path + ".json");
  meta << side.dump(2) << "\n";
}

inline SampleSet read_binary(const std::string& path) {
  std::ifstream meta(path + ".json");
  detail::require(static_cast<bool>(meta), "missing sidecar " + path + ".json");
  const auto side = nlohmann::json::parse(meta);
  detail::require(side.value("dtype", "") == "float64" && side.value("endianness", "") == "little", "unsupported sample encoding");
  SampleSet s(side.at("n").get<std::size_t>(), side.at("d").get<std::size_t>());
  if (side.contains("provenance")) s.provenance = side.at("provenance").get<std::map<std::string, std::string>>();
  std::ifstream in(path, std::ios::binary);
  detail::require(static_cast<bool>(in), "cannot open " + path);
  in.read(reinterpret_cast<char*>(s.values.data()), static_cast<std::streamsize>(s.values.size() * sizeof(double)));
  detail::require(in.gcount() == static_cast<std::streamsize>(s.values.size() * sizeof(double)), "binary sample file is truncated");
  return s;
}

// Dispatch on extension: ".csv" or anything else as binary.
inline SampleSet read_samples(const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") return read_csv_file(path);
  return read_binary(path);
}

}  // namespace forge
