#pragma once

// Evaluation report rows, the self-describing CSV format, and plot-ready
// per-figure data files (gnuplot-style) plus ASCII pattern renders.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pilotforge/common.hpp"
#include "pilotforge/selector.hpp"

namespace pilotforge::harness {

struct ReportRow {
  std::string method;
  int np = 0;
  float snr_db = 0.0f;
  double mse_raw = 0.0;
  double mse_norm = 0.0;
  int frames = 0;

  void validate() const {
    if (method.empty()) throw ValidationError("report row: empty method name");
    if (frames < 1) throw ValidationError("report row: frames must be >= 1");
    if (mse_raw < 0 || mse_norm < 0)
      throw ValidationError("report row: MSE must be nonnegative");
  }
};

inline constexpr const char* kReportCsvHeader = "method,np,snr_db,mse_raw,mse_norm,frames";

namespace detail {
inline std::string trim_csv(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}
inline std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '-');
  return out;
}
}  // namespace detail

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline void save_report_csv(const std::filesystem::path& path,
                            const std::vector<ReportRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw RunError("cannot write report: " + path.string());
  out << kReportCsvHeader << "\n";
  for (const auto& r : rows) {
    r.validate();
    out << r.method << ',' << r.np << ',' << format_double(r.snr_db) << ','
        << format_double(r.mse_raw) << ',' << format_double(r.mse_norm) << ',' << r.frames
        << "\n";
  }
  if (!out) throw RunError("report write failed: " + path.string());
}

inline std::vector<ReportRow> load_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open report CSV: " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw RunError("malformed report CSV (empty file): " + path.string());
  if (detail::trim_csv(line) != kReportCsvHeader)
    throw RunError("malformed report CSV header in " + path.string() + ": '" + line + "'");
  std::vector<ReportRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim_csv(line).empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 6)
      throw RunError("malformed report CSV at " + path.string() + ":" +
                     std::to_string(lineno));
    try {
      ReportRow r;
      r.method = fields[0];
      r.np = std::stoi(fields[1]);
      r.snr_db = std::stof(fields[2]);
      r.mse_raw = std::stod(fields[3]);
      r.mse_norm = std::stod(fields[4]);
      r.frames = std::stoi(fields[5]);
      r.validate();
      rows.push_back(std::move(r));
    } catch (const ValidationError&) {
      throw;
    } catch (...) {
      throw RunError("malformed report CSV at " + path.string() + ":" +
                     std::to_string(lineno));
    }
  }
  return rows;
}

// nf rows by nn columns; '#' marks a pilot cell.
inline std::string render_pattern_ascii(const PilotPattern& p) {
  p.validate();
  std::vector<std::string> rows(p.nf, std::string(p.nn, '.'));
  for (const auto& [s, t] : p.indices) rows[s][t] = '#';
  std::ostringstream os;
  os << "# pilot pattern " << p.nf << "x" << p.nn << " k=" << p.indices.size() << "\n";
  os << "# rows: subcarriers, columns: time slots\n";
  for (const auto& r : rows) os << r << "\n";
  return os.str();
}

// Emits one data file per (figure, method): MSE-vs-SNR curves per np, and
// an MSE-vs-np sweep at the given reference SNR when several np values are
// present. Output bytes are a pure function of the rows.
inline std::vector<std::filesystem::path> emit_figure_files(
    const std::filesystem::path& dir, std::vector<ReportRow> rows,
    float np_sweep_snr_db = 15.0f) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
    if (a.method != b.method) return a.method < b.method;
    if (a.np != b.np) return a.np < b.np;
    return a.snr_db < b.snr_db;
  });

  std::set<std::pair<std::string, int>> curve_keys;
  std::set<std::string> methods;
  std::set<int> nps;
  for (const auto& r : rows) {
    curve_keys.insert({r.method, r.np});
    methods.insert(r.method);
    nps.insert(r.np);
  }

  for (const auto& [method, np] : curve_keys) {
    const auto path =
        dir / ("fig_mse_snr_np" + std::to_string(np) + "_" + detail::sanitize(method) +
               ".dat");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw RunError("cannot write " + path.string());
    out << "# method " << method << " np " << np << "\n";
    out << "# snr_db mse_raw mse_norm frames\n";
    for (const auto& r : rows)
      if (r.method == method && r.np == np)
        out << format_double(r.snr_db) << ' ' << format_double(r.mse_raw) << ' '
            << format_double(r.mse_norm) << ' ' << r.frames << "\n";
    written.push_back(path);
  }

  if (nps.size() > 1) {
    for (const auto& method : methods) {
      std::vector<const ReportRow*> pts;
      for (const auto& r : rows)
        if (r.method == method && r.snr_db == np_sweep_snr_db) pts.push_back(&r);
      if (pts.size() < 2) continue;
      const auto path = dir / ("fig_mse_np_" + detail::sanitize(method) + ".dat");
      std::ofstream out(path, std::ios::trunc);
      if (!out) throw RunError("cannot write " + path.string());
      out << "# method " << method << " at snr_db " << format_double(np_sweep_snr_db)
          << "\n";
      out << "# np mse_raw mse_norm frames\n";
      for (const auto* r : pts)
        out << r->np << ' ' << format_double(r->mse_raw) << ' '
            << format_double(r->mse_norm) << ' ' << r->frames << "\n";
      written.push_back(path);
    }
  }
  return written;
}

}  // namespace pilotforge::harness
