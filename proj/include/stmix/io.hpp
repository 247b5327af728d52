#pragma once

// File formats: event and vertex CSVs, the binary posterior archive and the
// CSV reports the command-line tool emits. Every write goes through a
// temporary file renamed into place, so readers never see partial output.
// Numeric text is printed with 15 significant digits.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stmix/geometry.hpp"
#include "stmix/sampler.hpp"
#include "stmix/seasonality.hpp"

namespace stmix {

// ---------------------------------------------------------------- events --

struct EventTable {
  std::vector<Event> events;
  long rejected{0};
  std::vector<std::string> issues;  // one message per rejected or odd row
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  for (auto& f : fields) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.erase(f.begin());
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t')) f.pop_back();
  }
  return fields;
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

inline bool parse_long(const std::string& s, long& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtol(s.c_str(), &end, 10);
  return end == s.c_str() + s.size();
}

// Seconds since the Unix epoch of an ISO 8601 timestamp such as
// 2008-02-06T14:00:00 (an optional trailing Z is accepted; everything is
// treated as one fixed clock).
inline bool parse_iso8601(const std::string& s, double& seconds) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0;
  double sec = 0.0;
  char tail[8] = {0};
  const int got =
      std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%lf%7s", &y, &mo, &d, &h, &mi, &sec, tail);
  if (got < 6) return false;
  if (got == 7 && std::strcmp(tail, "Z") != 0) return false;
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 ||
      sec < 0.0 || sec >= 61.0)
    return false;
  std::tm tm{};
  tm.tm_year = y - 1900;
  tm.tm_mon = mo - 1;
  tm.tm_mday = d;
  tm.tm_hour = h;
  tm.tm_min = mi;
  tm.tm_sec = 0;
  const std::time_t base = timegm(&tm);
  if (base == static_cast<std::time_t>(-1)) return false;
  seconds = static_cast<double>(base) + sec;
  return true;
}

}  // namespace detail

namespace detail {

// First line that is not a '#' comment; false at end of file.
inline bool next_content_line(std::istream& in, std::string& line, long& line_no) {
  while (std::getline(in, line)) {
    line_no += 1;
    if (!line.empty() && line[0] == '#') continue;
    return true;
  }
  return false;
}

}  // namespace detail

// Reads an event CSV. Two header shapes are accepted: `period,x_km,y_km`
// with periods already assigned, or `timestamp_iso8601,x_km,y_km` binned at
// load against the epoch (a timestamp exactly on a bin boundary belongs to
// the later bin). Lines starting with '#' are comments. Malformed rows are
// counted and reported; more than 1% of them aborts the read.
inline EventTable read_events(const std::string& path, const SeasonalityConfig& season,
                              const std::string& epoch = "", double bin_hours = 2.0) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("events: cannot open " + path);
  std::string line;
  long line_no = 0;
  if (!detail::next_content_line(in, line, line_no)) {
    EventTable empty;
    empty.issues.push_back("events: " + path + " is empty");
    return empty;
  }
  const std::vector<std::string> header = detail::split_csv_line(line);
  bool timestamped = false;
  if (header == std::vector<std::string>{"period", "x_km", "y_km"}) {
    timestamped = false;
  } else if (header == std::vector<std::string>{"timestamp_iso8601", "x_km", "y_km"}) {
    timestamped = true;
  } else {
    throw std::runtime_error("events: " + path +
                             ": header must be period,x_km,y_km or timestamp_iso8601,x_km,y_km");
  }
  double epoch_seconds = 0.0;
  if (timestamped) {
    if (epoch.empty())
      throw std::invalid_argument("events: timestamped input needs a binning epoch");
    if (!(bin_hours > 0.0)) throw std::invalid_argument("events: bin_hours must be positive");
    if (!detail::parse_iso8601(epoch, epoch_seconds))
      throw std::invalid_argument("events: cannot parse epoch '" + epoch + "'");
  }

  EventTable table;
  long total = 0;
  auto reject = [&](const std::string& why) {
    table.rejected += 1;
    table.issues.push_back("line " + std::to_string(line_no) + ": " + why);
  };
  while (detail::next_content_line(in, line, line_no)) {
    if (line.empty()) continue;
    total += 1;
    const std::vector<std::string> f = detail::split_csv_line(line);
    if (f.size() != 3) {
      reject("expected 3 fields, got " + std::to_string(f.size()));
      continue;
    }
    double x = 0.0, y = 0.0;
    if (!detail::parse_double(f[1], x) || !detail::parse_double(f[2], y)) {
      reject("non-numeric coordinate");
      continue;
    }
    long period = 0;
    if (timestamped) {
      double ts = 0.0;
      if (!detail::parse_iso8601(f[0], ts)) {
        reject("cannot parse timestamp '" + f[0] + "'");
        continue;
      }
      const double rel = ts - epoch_seconds;
      if (rel < 0.0) {
        reject("timestamp precedes the epoch");
        continue;
      }
      period = static_cast<long>(rel / (bin_hours * 3600.0)) + 1;
    } else if (!detail::parse_long(f[0], period)) {
      reject("non-integer period");
      continue;
    }
    if (period < 1 || period > season.n_periods) {
      reject("period " + std::to_string(period) + " outside 1.." +
             std::to_string(season.n_periods));
      continue;
    }
    table.events.push_back({static_cast<int>(period), {x, y}});
  }
  if (total == 0) table.issues.push_back("events: " + path + " has a header but no rows");
  if (total > 0 && 100 * table.rejected > total)
    throw std::runtime_error("events: " + path + ": " + std::to_string(table.rejected) + " of " +
                             std::to_string(total) + " rows malformed (over 1%)");
  return table;
}

// ------------------------------------------------------------- csv files --

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.15g", v);
  return std::string(buf);
}

// Writes through a sibling temp file and renames it into place.
inline void atomic_write(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("io: cannot open " + tmp + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("io: short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("io: cannot rename " + tmp + " to " + path);
}

}  // namespace detail

inline void write_events_csv(const std::string& path, const std::vector<Event>& events,
                             const std::string& comment = "") {
  std::string out;
  if (!comment.empty()) out += "# " + comment + "\n";
  out += "period,x_km,y_km\n";
  for (const auto& e : events) {
    out += std::to_string(e.period) + "," + detail::fmt_double(e.location.x) + "," +
           detail::fmt_double(e.location.y) + "\n";
  }
  detail::atomic_write(path, out);
}

// Vertex list `x_km,y_km`; the polygon closes itself.
inline StudyRegion read_region(const std::string& path, double grid_resolution) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("region: cannot open " + path);
  std::string line;
  long line_no = 0;
  if (!detail::next_content_line(in, line, line_no) ||
      detail::split_csv_line(line) != std::vector<std::string>{"x_km", "y_km"})
    throw std::runtime_error("region: " + path + ": header must be x_km,y_km");
  StudyRegion region;
  region.grid_resolution = grid_resolution;
  while (detail::next_content_line(in, line, line_no)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = detail::split_csv_line(line);
    double x = 0.0, y = 0.0;
    if (f.size() != 2 || !detail::parse_double(f[0], x) || !detail::parse_double(f[1], y))
      throw std::runtime_error("region: " + path + " line " + std::to_string(line_no) +
                               ": expected two numeric fields");
    region.vertices.push_back({x, y});
  }
  if (region.vertices.size() < 3)
    throw std::runtime_error("region: " + path + ": need at least 3 vertices");
  return region;
}

inline std::vector<SpatialPoint> read_points(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("points: cannot open " + path);
  std::string line;
  long line_no = 0;
  if (!detail::next_content_line(in, line, line_no) ||
      detail::split_csv_line(line) != std::vector<std::string>{"x_km", "y_km"})
    throw std::runtime_error("points: " + path + ": header must be x_km,y_km");
  std::vector<SpatialPoint> pts;
  while (detail::next_content_line(in, line, line_no)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = detail::split_csv_line(line);
    double x = 0.0, y = 0.0;
    if (f.size() != 2 || !detail::parse_double(f[0], x) || !detail::parse_double(f[1], y))
      throw std::runtime_error("points: " + path + " line " + std::to_string(line_no) +
                               ": expected two numeric fields");
    pts.push_back({x, y});
  }
  return pts;
}

// --------------------------------------------------------- draw archives --

// Posterior draws plus everything needed to interpret them.
struct DrawArchive {
  std::vector<PosteriorDraw> draws;
  SeasonalityConfig season;
  std::uint64_t seed{0};
  std::string config_hash;
  std::map<std::string, double> acceptance;
};

namespace detail {

constexpr char kDrawMagic[9] = "STMXDRW1";

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_i64(std::string& out, std::int64_t v) {
  const std::uint64_t u = static_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
  std::uint64_t u = 0;
  std::memcpy(&u, &v, sizeof(u));
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

// Sequential reader that reports the byte offset of any truncation.
struct ByteReader {
  const std::string& buf;
  size_t pos{0};

  void need(size_t n) const {
    if (pos + n > buf.size())
      throw std::runtime_error("draw archive truncated at byte " + std::to_string(buf.size()) +
                               " (needed " + std::to_string(pos + n) + ")");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::int64_t i64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return static_cast<std::int64_t>(v);
  }
  double f64() {
    const std::uint64_t u = static_cast<std::uint64_t>(i64());
    double v = 0.0;
    std::memcpy(&v, &u, sizeof(v));
    return v;
  }
};

}  // namespace detail

inline void write_draws(const DrawArchive& archive, const std::string& path) {
  nlohmann::json meta;
  meta["n_draws"] = archive.draws.size();
  meta["seed"] = archive.seed;
  meta["config_hash"] = archive.config_hash;
  meta["acceptance"] = archive.acceptance;
  meta["season"] = {{"n_periods", archive.season.n_periods},
                    {"n_blocks", archive.season.n_blocks},
                    {"periods_per_day", archive.season.periods_per_day}};
  const std::string header = meta.dump();

  std::string out(detail::kDrawMagic, 8);
  detail::put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  const int nb = archive.season.n_blocks;
  for (const auto& d : archive.draws) {
    const int k = d.k();
    if (d.pi.rows() != nb || d.pi.cols() != k - 1 || d.c.size() != k - 1 ||
        d.rho.size() != k - 1 || d.nu2.size() != k - 1)
      throw std::invalid_argument("write_draws: draw shape inconsistent with k and n_blocks");
    detail::put_i64(out, d.iteration);
    detail::put_u32(out, static_cast<std::uint32_t>(k));
    for (const auto& comp : d.components) {
      detail::put_f64(out, comp.mu[0]);
      detail::put_f64(out, comp.mu[1]);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) detail::put_f64(out, comp.sigma(i, j));
    }
    for (int b = 0; b < nb; ++b)
      for (int r = 0; r + 1 < k; ++r) detail::put_f64(out, d.pi(b, r));
    for (int r = 0; r + 1 < k; ++r) detail::put_f64(out, d.c[r]);
    for (int r = 0; r + 1 < k; ++r) detail::put_f64(out, d.rho[r]);
    for (int r = 0; r + 1 < k; ++r) detail::put_f64(out, d.nu2[r]);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) detail::put_f64(out, d.beta(i, j));
  }
  detail::atomic_write(path, out);
}

inline DrawArchive read_draws(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("draw archive: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();
  if (buf.size() < 8 || std::memcmp(buf.data(), "STMXDRW", 7) != 0)
    throw std::runtime_error("draw archive: " + path + " is not a draw archive");
  if (std::memcmp(buf.data(), detail::kDrawMagic, 8) != 0)
    throw std::runtime_error("draw archive: " + path + " has an unsupported format version");

  detail::ByteReader r{buf, 8};
  const std::uint32_t header_len = r.u32();
  r.need(header_len);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(buf.substr(r.pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("draw archive: bad metadata header: ") + e.what());
  }
  r.pos += header_len;

  DrawArchive archive;
  archive.seed = meta.at("seed").get<std::uint64_t>();
  archive.config_hash = meta.at("config_hash").get<std::string>();
  archive.acceptance = meta.at("acceptance").get<std::map<std::string, double>>();
  archive.season.n_periods = meta.at("season").at("n_periods").get<int>();
  archive.season.n_blocks = meta.at("season").at("n_blocks").get<int>();
  archive.season.periods_per_day = meta.at("season").at("periods_per_day").get<int>();
  validate(archive.season);
  const size_t n_draws = meta.at("n_draws").get<size_t>();

  const int nb = archive.season.n_blocks;
  archive.draws.reserve(n_draws);
  for (size_t i = 0; i < n_draws; ++i) {
    PosteriorDraw d;
    d.iteration = r.i64();
    const int k = static_cast<int>(r.u32());
    if (k < 1) throw std::runtime_error("draw archive: draw with no components");
    d.components.resize(static_cast<size_t>(k));
    for (auto& comp : d.components) {
      comp.mu[0] = r.f64();
      comp.mu[1] = r.f64();
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) comp.sigma(a, b) = r.f64();
    }
    d.pi.resize(nb, k - 1);
    for (int b = 0; b < nb; ++b)
      for (int c = 0; c + 1 < k; ++c) d.pi(b, c) = r.f64();
    d.c.resize(k - 1);
    d.rho.resize(k - 1);
    d.nu2.resize(k - 1);
    for (int c = 0; c + 1 < k; ++c) d.c[c] = r.f64();
    for (int c = 0; c + 1 < k; ++c) d.rho[c] = r.f64();
    for (int c = 0; c + 1 < k; ++c) d.nu2[c] = r.f64();
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) d.beta(a, b) = r.f64();
    archive.draws.push_back(std::move(d));
  }
  if (r.pos != buf.size())
    throw std::runtime_error("draw archive: " + std::to_string(buf.size() - r.pos) +
                             " trailing bytes after the last draw");
  return archive;
}

// Scalar parameters of every draw in long form, one row per draw and
// non-reference component.
inline void write_draw_scalars_csv(const std::string& path, const DrawArchive& archive) {
  std::string out = "iteration,k,component,c,rho,nu2\n";
  for (const auto& d : archive.draws) {
    for (int r = 0; r + 1 < d.k(); ++r) {
      out += std::to_string(d.iteration) + "," + std::to_string(d.k()) + "," +
             std::to_string(r + 1) + "," + detail::fmt_double(d.c[r]) + "," +
             detail::fmt_double(d.rho[r]) + "," + detail::fmt_double(d.nu2[r]) + "\n";
    }
  }
  detail::atomic_write(path, out);
}

}  // namespace stmix
