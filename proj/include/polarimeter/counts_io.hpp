#pragma once

// Line-delimited count-record files.
//
//   # polarimeter-counts v1
//   # seed: 42
//   # settings: 0=HV/HV 1=HV/DA ... 8=RL/RL
//   # columns: setting_id,label_q1,label_q2,c1,c2,c3,c4,dwell_s,acc1,acc2,acc3,acc4,timestamp_s
//   0,HV,HV,40,0,0,40,0.08,6.666666666666667,6.666666666666667,...
//
// Reals are written in shortest round-trip form, so read(write(x)) == x bit
// for bit. Record ids are the 0-based data-line order. The timestamp column
// is optional on input.

#include <charconv>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "polarimeter/error.hpp"
#include "polarimeter/measurement.hpp"

namespace polarimeter {

struct CountFile {
  std::optional<std::uint64_t> seed;
  std::vector<MeasurementSetting> settings;
  std::vector<CountRecord> records;
};

inline std::string format_real(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw Error("cannot format real");
  return {buf, end};
}

inline double parse_real(std::string_view text, const std::string& where) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last)
    throw ParseError(where + ": expected a number, got '" + std::string(text) + "'");
  return v;
}

inline long long parse_integer(std::string_view text, const std::string& where) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw ParseError(where + ": expected an integer, got '" + std::string(text) + "'");
  return v;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

inline void write_count_file(std::ostream& out, const CountFile& file) {
  out << "# polarimeter-counts v1\n";
  if (file.seed) out << "# seed: " << *file.seed << "\n";
  out << "# settings:";
  for (const auto& s : file.settings) out << ' ' << s.id << '=' << label(s.bases[0]) << '/' << label(s.bases[1]);
  out << "\n# columns: setting_id,label_q1,label_q2,c1,c2,c3,c4,dwell_s,acc1,acc2,acc3,acc4,timestamp_s\n";
  for (const auto& r : file.records) {
    const MeasurementSetting* setting = nullptr;
    for (const auto& s : file.settings)
      if (s.id == r.setting_id) setting = &s;
    if (!setting) throw InvalidArgument("record refers to unknown setting " + std::to_string(r.setting_id));
    out << r.setting_id << ',' << label(setting->bases[0]) << ',' << label(setting->bases[1]);
    for (double c : r.counts) out << ',' << format_real(c);
    out << ',' << format_real(r.dwell);
    for (double a : r.expected_accidentals) out << ',' << format_real(a);
    out << ',' << format_real(r.timestamp) << '\n';
  }
}

inline CountFile read_count_file(std::istream& in) {
  CountFile file;
  bool have_magic = false;
  bool have_settings = false;
  std::string line;
  std::size_t line_no = 0;
  std::uint64_t next_id = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = "line " + std::to_string(line_no);
    const std::string_view view = detail::trim(line);
    if (view.empty()) continue;
    if (view.front() == '#') {
      std::string_view body = detail::trim(view.substr(1));
      if (body == "polarimeter-counts v1") {
        have_magic = true;
      } else if (body.starts_with("seed:")) {
        file.seed = static_cast<std::uint64_t>(parse_integer(detail::trim(body.substr(5)), where));
      } else if (body.starts_with("settings:")) {
        std::istringstream items{std::string(body.substr(9))};
        std::string item;
        while (items >> item) {
          const auto eq = item.find('=');
          const auto slash = item.find('/');
          if (eq == std::string::npos || slash == std::string::npos || slash < eq)
            throw ParseError(where + ": malformed setting entry '" + item + "' (expected id=B1/B2)");
          const int id = static_cast<int>(parse_integer(std::string_view(item).substr(0, eq), where));
          file.settings.push_back(make_setting(id, parse_basis(item.substr(eq + 1, slash - eq - 1)),
                                               parse_basis(item.substr(slash + 1)), 1.0));
        }
        have_settings = true;
      }
      continue;
    }
    if (!have_magic) throw ParseError(where + ": missing '# polarimeter-counts v1' header");
    if (!have_settings) throw ParseError(where + ": data before the '# settings:' header");
    const auto fields = detail::split(view, ',');
    if (fields.size() != 12 && fields.size() != 13)
      throw ParseError(where + ": expected 12 or 13 comma-separated fields, got " +
                       std::to_string(fields.size()));
    CountRecord r;
    r.id = next_id++;
    r.setting_id = static_cast<int>(parse_integer(fields[0], where));
    const MeasurementSetting* setting = nullptr;
    for (const auto& s : file.settings)
      if (s.id == r.setting_id) setting = &s;
    if (!setting) throw ParseError(where + ": setting id " + std::to_string(r.setting_id) + " not in the settings header");
    if (parse_basis(std::string(fields[1])) != setting->bases[0] ||
        parse_basis(std::string(fields[2])) != setting->bases[1])
      throw ParseError(where + ": basis labels do not match setting " + std::to_string(r.setting_id));
    for (std::size_t k = 0; k < 4; ++k) {
      r.counts[k] = parse_real(fields[3 + k], where);
      if (!(r.counts[k] >= 0.0)) throw ParseError(where + ": negative count");
    }
    r.dwell = parse_real(fields[7], where);
    for (std::size_t k = 0; k < 4; ++k) r.expected_accidentals[k] = parse_real(fields[8 + k], where);
    if (fields.size() == 13) r.timestamp = parse_real(fields[12], where);
    file.records.push_back(r);
  }
  if (!have_magic) throw ParseError("missing '# polarimeter-counts v1' header");
  if (!have_settings) throw ParseError("missing '# settings:' header");
  return file;
}

}  // namespace polarimeter
