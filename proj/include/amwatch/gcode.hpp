#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace amwatch::gcode {

using Vec3 = std::array<double, 3>;

// One letter/number pair, e.g. X5 or F2100.
struct Word {
  char letter;
  double value;
  bool operator==(const Word&) const = default;
};

enum class CommandKind { Motion, Machine };

// A single G- or M-code line after lexing. Parameters are stored in
// canonical X,Y,Z,E,F,S,T order regardless of the order in the source,
// so serialize/parse round-trips compare equal structurally.
struct Command {
  CommandKind kind;
  int number;                 // G or M number
  std::vector<Word> params;   // non-G/M words, canonical order
  int source_line;            // 1-based

  std::optional<double> param(char letter) const;
  bool operator==(const Command&) const = default;
};

// A motion row after modal resolution: absolute targets, carried feedrate.
struct ResolvedMove {
  int row_id;
  Vec3 target;               // mm
  double extrusion_target;   // cumulative physical filament, mm
  double feedrate;           // mm/min
  int source_line;
};

struct ParseError : std::runtime_error {
  int line;
  int column;
  ParseError(std::string msg, int line_, int column_)
      : std::runtime_error(std::move(msg)), line(line_), column(column_) {}
};

struct ResolveError : std::runtime_error {
  int line;
  ResolveError(std::string msg, int line_)
      : std::runtime_error(std::move(msg)), line(line_) {}
};

// Dialect: G0, G1 (coordinated linear moves), G28 (home), G92 E
// (extrusion reset); M104/M140/M106/M107. Everything else is rejected.
std::vector<Command> parse_program(std::string_view text);

// Per-row mapping back to the command list, needed by the attack mutators.
struct ResolvedProgram {
  std::vector<ResolvedMove> moves;
  std::vector<std::size_t> command_index;  // moves[i] came from commands[command_index[i]]
};

ResolvedProgram resolve_program(const std::vector<Command>& commands,
                                const Vec3& origin = {0.0, 0.0, 0.0});

std::vector<ResolvedMove> resolve_modal(const std::vector<Command>& commands,
                                        const Vec3& origin = {0.0, 0.0, 0.0});

std::string serialize_program(const std::vector<Command>& commands);

// Shortest decimal form that round-trips, shared with the CSV writers.
std::string format_number(double v);

}  // namespace amwatch::gcode
