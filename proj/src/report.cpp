#include "safe_embed/report.hpp"

#include <cstdio>
#include <fstream>
#include <system_error>

namespace safe_embed {

namespace {

void append_number(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  out += buf;
}

void append_series(std::string& out, const char* prefix, int count) {
  for (int i = 1; i <= count; ++i) {
    out += ',';
    out += prefix;
    out += std::to_string(i);
  }
}

// Tabs and newlines would break the row layout.
std::string cell(std::string s) {
  for (char& c : s) {
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

std::string csv_header(const Trajectory& traj) {
  const int q = traj.margins.empty() ? 0 : static_cast<int>(traj.margins[0].size());
  std::string out = "t";
  append_series(out, "x", traj.n);
  append_series(out, "z", traj.nz);
  append_series(out, "u", traj.m);
  append_series(out, "d", traj.m);
  append_series(out, "h", q);
  out += ",status\n";
  return out;
}

std::string trajectory_csv(const Trajectory& traj, int stride) {
  if (stride < 1) stride = 1;
  std::string out = csv_header(traj);
  const std::size_t rows = traj.size();
  for (std::size_t k = 0; k < rows; ++k) {
    const bool last = k + 1 == rows;
    if (k % stride != 0 && !last) continue;
    append_number(out, traj.t[k]);
    for (const Vector* v : {&traj.xbar[k], &traj.u[k], &traj.d[k], &traj.margins[k]}) {
      for (Eigen::Index i = 0; i < v->size(); ++i) {
        out += ',';
        append_number(out, (*v)(i));
      }
    }
    out += ',';
    out += last ? to_string(traj.status) : "ok";
    out += '\n';
  }
  return out;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    f.flush();
    if (!f) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw std::runtime_error("cannot rename " + tmp.string() + ": " + ec.message());
  }
}

std::string assertion_report(const scenarios::ScenarioResult& result) {
  std::string out;
  out += "# safe-embed assertion report\n";
  out += "schema_version\t" + std::to_string(kOutputSchemaVersion) + "\n";
  out += "scenario\t" + result.id + "\n";
  out += "seed\t" + std::to_string(result.seed) + "\n";
  out += "verdict\t" + scenarios::to_string(result.verdict()) + "\n";
  out += "parameters\t" + result.params.dump() + "\n";
  out += "\nassertion\texpected\tobserved\ttolerance\tverdict\n";
  for (const auto& a : result.assertions) {
    out += cell(a.id) + '\t' + cell(a.expected) + '\t' + cell(a.observed) + '\t' +
           cell(a.tolerance) + '\t' + scenarios::to_string(a.verdict) + '\n';
  }
  return out;
}

std::vector<std::filesystem::path> write_scenario_outputs(
    const std::filesystem::path& root, const scenarios::ScenarioResult& result) {
  const auto dir = root / result.id / ("seed" + std::to_string(result.seed));
  std::vector<std::filesystem::path> written;
  for (const auto& track : result.tracks) {
    const auto path = dir / (track.name + ".csv");
    write_atomic(path, trajectory_csv(track.trajectory, result.csv_stride));
    written.push_back(path);
  }
  const auto report = dir / "report.txt";
  write_atomic(report, assertion_report(result));
  written.push_back(report);
  return written;
}

}  // namespace safe_embed
