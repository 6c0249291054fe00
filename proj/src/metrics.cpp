#include "mergeq/metrics.hpp"

#include <charconv>
#include <fstream>
#include <system_error>

#include "mergeq/errors.hpp"

namespace mergeq {

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

template <typename T>
T parse_num(std::string_view s, int line_no, const char* field) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw FormatError("metrics line " + std::to_string(line_no) + ": bad " +
                      field + " value '" + std::string(s) + "'");
  return v;
}

}  // namespace

void write_metrics_csv(const MetricsLog& log, const std::filesystem::path& path) {
  std::string out;
  out.reserve(64 * (log.rows.size() + 1));
  out += kMetricsHeader;
  out += '\n';
  for (const auto& r : log.rows) {
    out += r.run_id;
    out += ',';
    out += r.policy;
    out += ',';
    out += std::to_string(r.seed);
    out += ',';
    out += std::to_string(r.episode);
    out += ',';
    out += std::to_string(r.step);
    out += ',';
    out += std::to_string(r.action);
    out += ',';
    append_double(out, r.reward);
    out += ',';
    append_double(out, r.q_max);
    out += ',';
    append_double(out, r.wall_ms);
    out += '\n';
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw FormatError("short write to " + path.string());
}

MetricsLog read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());

  MetricsLog log;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != kMetricsHeader)
        throw FormatError("bad metrics header '" + line + "'");
      continue;
    }
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 9)
      throw FormatError("metrics line " + std::to_string(line_no) + ": expected 9 fields, got " +
                        std::to_string(fields.size()));
    MetricsRow r;
    r.run_id = std::string(fields[0]);
    r.policy = std::string(fields[1]);
    r.seed = parse_num<std::uint64_t>(fields[2], line_no, "seed");
    r.episode = parse_num<int>(fields[3], line_no, "episode");
    r.step = parse_num<int>(fields[4], line_no, "step");
    r.action = parse_num<int>(fields[5], line_no, "action");
    r.reward = parse_num<double>(fields[6], line_no, "reward");
    r.q_max = parse_num<double>(fields[7], line_no, "q_max");
    r.wall_ms = parse_num<double>(fields[8], line_no, "wall_ms");
    log.rows.push_back(std::move(r));
  }
  return log;
}

}  // namespace mergeq
