#pragma once

// CSV ingestion for datasets (header `y,x1,..,xp`, x1 the intercept column)
// and JSON serialization of scenario specs.

#include "qfcp/model.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace qfcp {

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') { out.push_back(cur); cur.clear(); }
    else if (ch != '\r') cur.push_back(ch);
  }
  out.push_back(cur);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = (b == std::string::npos) ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

inline double parse_double(const std::string& s, int line, int col) {
  if (s.empty() || s == "NA" || s == "NaN" || s == "nan")
    throw std::invalid_argument("missing value at line " + std::to_string(line) + ", column " + std::to_string(col));
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw std::invalid_argument("malformed number '" + s + "' at line " + std::to_string(line));
  return v;
}

/// Shortest text that parses back to exactly the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace detail

inline Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty CSV input");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "y")
    throw std::invalid_argument("CSV header must start with 'y' followed by x1..xp");
  for (std::size_t j = 1; j < header.size(); ++j)
    if (header[j] != "x" + std::to_string(j))
      throw std::invalid_argument("CSV header column " + std::to_string(j + 1) + " must be 'x" + std::to_string(j) + "'");
  const std::size_t p = header.size() - 1;

  std::vector<double> ys;
  std::vector<double> xs;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != p + 1)
      throw std::invalid_argument("line " + std::to_string(lineno) + " has " + std::to_string(fields.size()) +
                                  " fields, expected " + std::to_string(p + 1));
    ys.push_back(detail::parse_double(fields[0], lineno, 1));
    for (std::size_t j = 1; j <= p; ++j) xs.push_back(detail::parse_double(fields[j], lineno, static_cast<int>(j + 1)));
  }
  const auto n = static_cast<Eigen::Index>(ys.size());
  Vector y = Eigen::Map<Vector>(ys.data(), n);
  Matrix x = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      xs.data(), n, static_cast<Eigen::Index>(p));
  return Dataset(std::move(y), std::move(x));
}

inline Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  return read_dataset_csv(in);
}

inline void write_dataset_csv(std::ostream& out, const Dataset& data) {
  out << 'y';
  for (int j = 1; j <= data.p(); ++j) out << ",x" << j;
  out << '\n';
  for (int i = 0; i < data.n(); ++i) {
    out << detail::format_double(data.y(i));
    for (int j = 0; j < data.p(); ++j) out << ',' << detail::format_double(data.x(i, j));
    out << '\n';
  }
}

inline nlohmann::json vector_to_json(const Vector& v) {
  auto arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline Vector vector_from_json(const nlohmann::json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j.at(i).get<double>();
  return v;
}

inline nlohmann::json to_json(const TrueSegmentation& seg) {
  nlohmann::json j;
  j["change_fractions"] = seg.change_fractions;
  auto phases = nlohmann::json::array();
  for (const auto& c : seg.phase_coeffs) phases.push_back(vector_to_json(c));
  j["phase_coeffs"] = phases;
  return j;
}

inline TrueSegmentation segmentation_from_json(const nlohmann::json& j) {
  TrueSegmentation seg;
  seg.change_fractions = j.at("change_fractions").get<std::vector<double>>();
  for (const auto& c : j.at("phase_coeffs")) seg.phase_coeffs.push_back(vector_from_json(c));
  seg.validate();
  return seg;
}

inline nlohmann::json to_json(const ScenarioSpec& spec) {
  nlohmann::json j;
  j["name"] = std::string(to_string(spec.name));
  j["n"] = spec.n;
  j["errors"] = std::string(to_string(spec.errors));
  j["seed"] = spec.seed;
  j["noise_scale"] = spec.noise_scale;
  j["design"] = spec.design == Design::ramp ? "ramp" : "gaussian";
  j["segmentation"] = to_json(spec.segmentation);
  return j;
}

inline ScenarioSpec scenario_from_json(const nlohmann::json& j) {
  ScenarioSpec spec;
  spec.name = parse_scenario_name(j.at("name").get<std::string>());
  spec.n = j.at("n").get<int>();
  spec.errors = parse_error_kind(j.at("errors").get<std::string>());
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.noise_scale = j.value("noise_scale", 1.0);
  const auto design = j.value("design", std::string("ramp"));
  if (design != "ramp" && design != "gaussian") throw std::invalid_argument("unknown design '" + design + "'");
  spec.design = design == "ramp" ? Design::ramp : Design::gaussian;
  spec.segmentation = segmentation_from_json(j.at("segmentation"));
  return spec;
}

}  // namespace qfcp
