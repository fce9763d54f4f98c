#include "amwatch/gcode.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>

namespace amwatch::gcode {

namespace {

constexpr std::string_view kAllowedLetters = "GMFXYZEST";
constexpr std::string_view kParamOrder = "XYZEFST";

bool letter_allowed(char c) {
  return kAllowedLetters.find(c) != std::string_view::npos;
}

int param_rank(char c) {
  auto pos = kParamOrder.find(c);
  return pos == std::string_view::npos ? int(kParamOrder.size()) : int(pos);
}

bool supported_g(int n) { return n == 0 || n == 1 || n == 28 || n == 92; }
bool supported_m(int n) {
  return n == 104 || n == 140 || n == 106 || n == 107;
}

}  // namespace

std::optional<double> Command::param(char letter) const {
  for (const Word& w : params)
    if (w.letter == letter) return w.value;
  return std::nullopt;
}

std::vector<Command> parse_program(std::string_view text) {
  std::vector<Command> commands;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line = (eol == std::string_view::npos)
                                ? text.substr(pos)
                                : text.substr(pos, eol - pos);
    if (pos == text.size() && line.empty() && line_no > 0) break;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (auto c = line.find(';'); c != std::string_view::npos) line = line.substr(0, c);

    std::vector<Word> words;
    std::size_t i = 0;
    while (i < line.size()) {
      if (std::isspace(static_cast<unsigned char>(line[i]))) {
        ++i;
        continue;
      }
      int col = int(i) + 1;
      char letter = char(std::toupper(static_cast<unsigned char>(line[i])));
      if (!std::isalpha(static_cast<unsigned char>(line[i])) || !letter_allowed(letter))
        throw ParseError("unknown letter '" + std::string(1, line[i]) + "'", line_no, col);
      ++i;
      std::size_t num_start = i;
      if (i < line.size() && (line[i] == '+' || line[i] == '-')) ++i;
      std::size_t digits_start = i;
      while (i < line.size() &&
             (std::isdigit(static_cast<unsigned char>(line[i])) || line[i] == '.'))
        ++i;
      double value = 0.0;
      auto [ptr, ec] = std::from_chars(line.data() + digits_start, line.data() + i, value);
      if (ec != std::errc{} || ptr != line.data() + i || i == digits_start)
        throw ParseError(std::string("word '") + letter + "' has no number", line_no, col);
      if (num_start != digits_start && line[num_start] == '-') value = -value;
      if (!std::isfinite(value))
        throw ParseError(std::string("non-finite value for '") + letter + "'", line_no, col);
      for (const Word& w : words)
        if (w.letter == letter)
          throw ParseError(std::string("duplicate parameter '") + letter + "'", line_no, col);
      words.push_back({letter, value});
    }

    if (!words.empty()) {
      Command cmd;
      cmd.source_line = line_no;
      int gm_count = 0;
      for (const Word& w : words) {
        if (w.letter == 'G' || w.letter == 'M') {
          ++gm_count;
          double ip;
          if (std::modf(w.value, &ip) != 0.0)
            throw ParseError("non-integer G/M number", line_no, 1);
          int n = int(ip);
          if (w.letter == 'G') {
            if (!supported_g(n)) throw ParseError("unsupported G" + std::to_string(n), line_no, 1);
            cmd.kind = CommandKind::Motion;
          } else {
            if (!supported_m(n)) throw ParseError("unsupported M" + std::to_string(n), line_no, 1);
            cmd.kind = CommandKind::Machine;
          }
          cmd.number = n;
        } else {
          cmd.params.push_back(w);
        }
      }
      if (gm_count == 0) throw ParseError("line has no G/M word", line_no, 1);
      if (gm_count > 1) throw ParseError("multiple G/M words on one line", line_no, 1);
      std::stable_sort(cmd.params.begin(), cmd.params.end(),
                       [](const Word& a, const Word& b) {
                         return param_rank(a.letter) < param_rank(b.letter);
                       });
      commands.push_back(std::move(cmd));
    }

    if (eol == std::string_view::npos) break;
    pos = eol + 1;
  }
  return commands;
}

ResolvedProgram resolve_program(const std::vector<Command>& commands, const Vec3& origin) {
  ResolvedProgram out;
  Vec3 pos = origin;
  double e_phys = 0.0;
  double e_offset = 0.0;  // physical = logical + offset, maintained by G92 E
  double feedrate = 0.0;
  bool feedrate_set = false;
  int row_id = 0;

  for (std::size_t ci = 0; ci < commands.size(); ++ci) {
    const Command& c = commands[ci];
    if (c.kind == CommandKind::Machine) continue;  // heater/fan settings, no row

    if (c.number == 92) {
      auto e = c.param('E');
      if (!e) throw ResolveError("G92 requires an E word", c.source_line);
      for (const Word& w : c.params)
        if (w.letter != 'E')
          throw ResolveError("G92 supports only E in this dialect", c.source_line);
      e_offset = e_phys - *e;
      continue;
    }

    if (auto f = c.param('F')) {
      if (*f <= 0.0) throw ResolveError("feedrate must be positive", c.source_line);
      feedrate = *f;
      feedrate_set = true;
    }
    if (!feedrate_set)
      throw ResolveError("motion before any feedrate is set", c.source_line);

    Vec3 target = pos;
    double e_target = e_phys;
    if (c.number == 28) {
      target = origin;
    } else {
      if (auto x = c.param('X')) target[0] = *x;
      if (auto y = c.param('Y')) target[1] = *y;
      if (auto z = c.param('Z')) target[2] = *z;
      if (auto e = c.param('E')) e_target = *e + e_offset;
    }

    out.moves.push_back({row_id, target, e_target, feedrate, c.source_line});
    out.command_index.push_back(ci);
    ++row_id;
    pos = target;
    e_phys = e_target;
  }
  return out;
}

std::vector<ResolvedMove> resolve_modal(const std::vector<Command>& commands,
                                        const Vec3& origin) {
  return resolve_program(commands, origin).moves;
}

std::string format_number(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string serialize_program(const std::vector<Command>& commands) {
  std::string out;
  for (const Command& c : commands) {
    out += (c.kind == CommandKind::Motion) ? 'G' : 'M';
    out += std::to_string(c.number);
    for (const Word& w : c.params) {
      out += ' ';
      out += w.letter;
      out += format_number(w.value);
    }
    out += '\n';
  }
  return out;
}

}  // namespace amwatch::gcode
