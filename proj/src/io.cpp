#include "spamtree/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace spamtree {

namespace fs = std::filesystem;

std::string format_double(double x) {
  if (std::isnan(x)) return "";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (b != e && *b == '+') ++b;
  double x = 0.0;
  const auto res = std::from_chars(b, e, x);
  if (res.ec != std::errc() || res.ptr != e) throw Error("not a number: '" + s + "'");
  return x;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::ofstream open_out(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path);
  return is;
}

void write_row(std::ostream& os, const Vector& v) {
  for (Eigen::Index k = 0; k < v.size(); ++k) os << (k ? "," : "") << format_double(v(k));
  os << '\n';
}

void write_header(std::ostream& os, const std::vector<std::string>& names) {
  for (std::size_t k = 0; k < names.size(); ++k) os << (k ? "," : "") << names[k];
  os << '\n';
}

}  // namespace

ModelData read_data_csv(std::istream& is, const IngestOptions& opt, IngestReport* report) {
  if (opt.dim < 1) throw Error("coordinate dimension must be at least 1");
  IngestReport local;
  IngestReport& rep = report ? *report : local;
  std::string line;
  if (!std::getline(is, line)) throw Error("missing header line");
  const auto header = split(line);
  const int ncols = static_cast<int>(header.size());
  if (ncols < opt.dim + 2)
    throw Error("header needs " + std::to_string(opt.dim) + " coordinates, a variable and an outcome");
  const int p = ncols - opt.dim - 2;

  ModelData data;
  data.locations = LocationSet(opt.dim);
  std::vector<double> y;
  std::vector<std::vector<double>> xrows;
  std::map<std::pair<std::vector<double>, int>, int> seen;
  int lineno = 1;
  int max_var = -1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (static_cast<int>(cells.size()) != ncols)
      throw Error(where + "expected " + std::to_string(ncols) + " fields, found " +
                  std::to_string(cells.size()));
    std::vector<double> coords(opt.dim);
    try {
      for (int k = 0; k < opt.dim; ++k) {
        coords[k] = parse_double(cells[k]);
        if (!std::isfinite(coords[k])) throw Error("non-finite coordinate");
      }
    } catch (const Error& e) {
      throw Error(where + e.what());
    }
    int var = -1;
    const auto& vc = cells[opt.dim];
    const auto res = std::from_chars(vc.data(), vc.data() + vc.size(), var);
    if (res.ec != std::errc() || res.ptr != vc.data() + vc.size() || var < 0)
      throw Error(where + "variable index must be a non-negative integer, got '" + vc + "'");
    if (opt.num_vars > 0 && var >= opt.num_vars)
      throw Error(where + "unknown variable index " + std::to_string(var));
    const auto [it, fresh] = seen.emplace(std::make_pair(coords, var), lineno);
    if (!fresh)
      throw Error(where + "duplicate location and variable (first seen on line " +
                  std::to_string(it->second) + ")");
    double yv = std::nan("");
    std::vector<double> x(p);
    try {
      if (!cells[opt.dim + 1].empty()) {
        yv = parse_double(cells[opt.dim + 1]);
        if (!std::isfinite(yv)) throw Error("non-finite outcome");
      }
      for (int k = 0; k < p; ++k) {
        x[k] = parse_double(cells[opt.dim + 2 + k]);
        if (!std::isfinite(x[k])) throw Error("non-finite covariate");
      }
    } catch (const Error& e) {
      throw Error(where + e.what());
    }
    max_var = std::max(max_var, var);
    data.locations.push_back(coords, var);
    y.push_back(yv);
    xrows.push_back(std::move(x));
  }

  const int n = static_cast<int>(y.size());
  data.q = opt.num_vars > 0 ? opt.num_vars : std::max(1, max_var + 1);
  data.y = Eigen::Map<Vector>(y.data(), n);
  data.observed.resize(n);
  data.X.resize(n, p);
  for (int i = 0; i < n; ++i) {
    data.observed[i] = std::isnan(y[i]) ? 0 : 1;
    for (int k = 0; k < p; ++k) data.X(i, k) = xrows[i][k];
  }

  rep.rows_per_var.assign(data.q, 0);
  rep.observed_per_var.assign(data.q, 0);
  std::map<std::vector<double>, int> per_site;
  for (int i = 0; i < n; ++i) {
    const int v = data.locations.var(i);
    rep.rows_per_var[v]++;
    std::vector<double> c(data.locations.coords(i), data.locations.coords(i) + opt.dim);
    int& cnt = per_site[c];
    if (data.observed[i]) {
      rep.observed_per_var[v]++;
      cnt++;
    }
  }
  rep.spatial_locations = static_cast<int>(per_site.size());
  for (const auto& [c, cnt] : per_site) {
    if (cnt == data.q) rep.fully_observed_locations++;
    if (cnt == 1) rep.single_outcome_locations++;
  }
  if (n == 0) rep.warnings.push_back("no data rows after the header");
  for (int v = 0; v < data.q; ++v)
    if (rep.observed_per_var[v] == 0 && n > 0)
      rep.warnings.push_back("outcome " + std::to_string(v) + " has no observations");
  return data;
}

ModelData read_data_csv(const std::string& path, const IngestOptions& opt, IngestReport* report) {
  auto is = open_in(path);
  try {
    return read_data_csv(is, opt, report);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

std::string describe(const IngestReport& r) {
  std::ostringstream os;
  for (std::size_t v = 0; v < r.rows_per_var.size(); ++v)
    os << "outcome " << v << ": " << r.rows_per_var[v] << " rows, " << r.observed_per_var[v]
       << " observed\n";
  os << "spatial locations: " << r.spatial_locations << ", all outcomes observed at "
     << r.fully_observed_locations << ", exactly one at " << r.single_outcome_locations << "\n";
  for (const auto& w : r.warnings) os << "warning: " << w << "\n";
  return os.str();
}

void write_data_csv(std::ostream& os, const ModelData& data) {
  const int d = data.locations.dim();
  std::vector<std::string> names;
  for (int k = 0; k < d; ++k) names.push_back("x" + std::to_string(k + 1));
  names.push_back("var");
  names.push_back("y");
  for (int k = 0; k < data.p(); ++k) names.push_back("c" + std::to_string(k + 1));
  write_header(os, names);
  for (int i = 0; i < data.n(); ++i) {
    for (int k = 0; k < d; ++k) os << format_double(data.locations.coords(i)[k]) << ',';
    os << data.locations.var(i) << ',';
    if (data.observed[i]) os << format_double(data.y(i));
    for (int k = 0; k < data.p(); ++k) os << ',' << format_double(data.X(i, k));
    os << '\n';
  }
}

void write_data_csv(const std::string& path, const ModelData& data) {
  auto os = open_out(path);
  write_data_csv(os, data);
  if (!os) throw Error("failed writing " + path);
}

void write_truth_csv(const std::string& path, const ModelData& data, const SynthTruth& truth) {
  auto os = open_out(path);
  const int d = data.locations.dim();
  std::vector<std::string> names;
  for (int k = 0; k < d; ++k) names.push_back("x" + std::to_string(k + 1));
  for (const char* s : {"var", "w", "y", "observed"}) names.emplace_back(s);
  write_header(os, names);
  for (int i = 0; i < data.n(); ++i) {
    for (int k = 0; k < d; ++k) os << format_double(data.locations.coords(i)[k]) << ',';
    os << data.locations.var(i) << ',' << format_double(truth.w(i)) << ','
       << format_double(truth.y_full(i)) << ',' << int(data.observed[i]) << '\n';
  }
  if (!os) throw Error("failed writing " + path);
}

void write_table(const std::string& path, const std::vector<std::string>& header,
                 const std::vector<Vector>& rows) {
  auto os = open_out(path);
  write_header(os, header);
  for (const auto& r : rows) write_row(os, r);
  if (!os) throw Error("failed writing " + path);
}

std::vector<Vector> read_table(const std::string& path, std::vector<std::string>* header) {
  auto is = open_in(path);
  std::string line;
  if (!std::getline(is, line)) throw Error(path + ": missing header");
  const auto names = split(line);
  if (header) *header = names;
  std::vector<Vector> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != names.size())
      throw Error(path + ": line " + std::to_string(lineno) + " has the wrong number of fields");
    Vector r(cells.size());
    for (std::size_t k = 0; k < cells.size(); ++k)
      r(k) = cells[k].empty() ? std::nan("") : parse_double(cells[k]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_samples(const std::string& dir, const ThetaLayout& layout,
                   const std::vector<Draw>& draws) {
  const fs::path base = fs::path(dir) / "samples";
  auto names = [](const char* prefix, Eigen::Index n) {
    std::vector<std::string> out;
    for (Eigen::Index k = 0; k < n; ++k) out.push_back(prefix + std::to_string(k));
    return out;
  };
  auto size_of = [&](auto member, Eigen::Index fallback) {
    return draws.empty() ? fallback : (draws.front().*member).size();
  };
  std::vector<Vector> w, beta, tau2, theta;
  for (const auto& d : draws) {
    w.push_back(d.w);
    beta.push_back(d.beta);
    tau2.push_back(d.tau2);
    theta.push_back(d.theta);
  }
  write_table((base / "w.csv").string(), names("w", size_of(&Draw::w, 0)), w);
  write_table((base / "beta.csv").string(), names("beta", size_of(&Draw::beta, 0)), beta);
  write_table((base / "tau2.csv").string(), names("tau2_", size_of(&Draw::tau2, layout.q())), tau2);
  write_table((base / "theta.csv").string(), layout.names(), theta);
}

std::vector<Draw> read_samples(const std::string& dir) {
  const fs::path base = fs::path(dir) / "samples";
  const auto w = read_table((base / "w.csv").string());
  const auto beta = read_table((base / "beta.csv").string());
  const auto tau2 = read_table((base / "tau2.csv").string());
  const auto theta = read_table((base / "theta.csv").string());
  const std::size_t n = w.size();
  if (beta.size() != n || tau2.size() != n || theta.size() != n)
    throw Error(dir + ": sample files disagree on the number of draws");
  std::vector<Draw> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = Draw{w[k], beta[k], tau2[k], theta[k]};
  return out;
}

void write_predictions(const std::string& path, const LocationSet& locs,
                       const PredictionSummary& s, const std::vector<std::uint8_t>& observed) {
  auto os = open_out(path);
  std::vector<std::string> names;
  for (int k = 0; k < locs.dim(); ++k) names.push_back("x" + std::to_string(k + 1));
  for (const char* c : {"var", "mean", "lower95", "upper95", "observed"}) names.emplace_back(c);
  write_header(os, names);
  for (int i = 0; i < locs.size(); ++i) {
    for (int k = 0; k < locs.dim(); ++k) os << format_double(locs.coords(i)[k]) << ',';
    os << locs.var(i) << ',' << format_double(s.mean(i)) << ',' << format_double(s.lower(i))
       << ',' << format_double(s.upper(i)) << ',' << int(observed[i]) << '\n';
  }
  if (!os) throw Error("failed writing " + path);
}

void write_scores(const std::string& path, const std::vector<Score>& scores) {
  std::vector<Vector> rows;
  for (std::size_t v = 0; v < scores.size(); ++v) {
    Vector r(5);
    r << static_cast<double>(v), scores[v].coverage95, scores[v].rmse, scores[v].mae,
        static_cast<double>(scores[v].count);
    rows.push_back(r);
  }
  write_table(path, {"var", "coverage95", "rmse", "mae", "count"}, rows);
}

KeyValues read_key_values(const std::string& path) {
  auto is = open_in(path);
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(path + ": line " + std::to_string(lineno) + " is not key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw Error(path + ": line " + std::to_string(lineno) + " has an empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

void write_key_values(const std::string& path, const KeyValues& kv) {
  auto os = open_out(path);
  for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
  if (!os) throw Error("failed writing " + path);
}

}  // namespace spamtree
