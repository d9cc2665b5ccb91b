#include "pdgibbs/model_io.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string_view>
#include <vector>

namespace pdgibbs {

ParseError::ParseError(std::size_t line, const std::string& message)
    : std::runtime_error(line > 0 ? fmt::format("line {}: {}", line, message) : message), line_(line) {}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) throw std::runtime_error("cannot format number");
  return std::string(buf, ptr);
}

void write_model(std::ostream& out, const Model& model) {
  out << "vars " << model.num_variables() << '\n';
  for (VarId v = 0; v < model.num_variables(); ++v) {
    out << "unary " << v;
    for (double a : model.variable(v).unary) out << ' ' << format_double(a);
    out << '\n';
  }
  for (std::size_t index : model.indices_by_id()) {
    const Factor& f = model.factors()[index];
    out << "factor " << f.id.value << ' ' << f.u << ' ' << f.v;
    for (double t : f.table.values()) out << ' ' << format_double(t);
    out << '\n';
  }
}

std::string model_to_string(const Model& model) {
  std::ostringstream out;
  write_model(out, model);
  return out.str();
}

namespace {

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

template <class T>
T parse_number(std::string_view token, std::size_t line, std::string_view what) {
  T value{};
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size())
    throw ParseError(line, fmt::format("invalid {} '{}'", what, token));
  return value;
}

}  // namespace

namespace {

struct DualRecord {
  std::size_t line;
  std::vector<std::string> tokens;
};

struct Parsed {
  Model model;
  std::optional<DualizeOptions> dual_options;
  std::size_t dual_line = 0;
  std::vector<DualRecord> dual_records;
};

Parsed parse(std::istream& in, bool allow_dual) {
  Parsed result;
  std::optional<std::size_t> n_vars;
  std::vector<std::optional<std::vector<double>>> unaries;
  struct PendingFactor {
    std::size_t line;
    std::uint64_t id;
    VarId u, v;
    std::vector<double> values;
  };
  std::vector<PendingFactor> pending;

  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tokens = split(line);
    if (tokens.empty()) continue;
    const std::string_view key = tokens[0];
    if (key == "vars") {
      if (n_vars) throw ParseError(line_no, "duplicate 'vars' header");
      if (tokens.size() != 2) throw ParseError(line_no, "expected 'vars N'");
      n_vars = parse_number<std::size_t>(tokens[1], line_no, "variable count");
      unaries.assign(*n_vars, std::nullopt);
      continue;
    }
    if (!n_vars) throw ParseError(line_no, "'vars N' must come first");
    if (key == "dual" || key == "dshift" || key == "dcomp" || key == "dparams") {
      if (!allow_dual) throw ParseError(line_no, fmt::format("'{}' records need a dual model reader", key));
      if (key == "dual") {
        if (result.dual_options) throw ParseError(line_no, "duplicate 'dual' header");
        if (tokens.size() < 2 || tokens.size() > 3) throw ParseError(line_no, "expected 'dual SCHEME [ALPHA]'");
        DualizeOptions opts;
        if (tokens[1] == "factorized") {
          opts.scheme = DualizationScheme::Factorized;
        } else if (tokens[1] == "swendsen-wang") {
          opts.scheme = DualizationScheme::SwendsenWang;
        } else if (tokens[1] == "higdon") {
          opts.scheme = DualizationScheme::Higdon;
        } else {
          throw ParseError(line_no, fmt::format("unknown dualization scheme '{}'", tokens[1]));
        }
        if (tokens.size() == 3) opts.higdon_alpha = parse_number<double>(tokens[2], line_no, "alpha");
        result.dual_options = opts;
        result.dual_line = line_no;
      } else {
        if (!result.dual_options) throw ParseError(line_no, fmt::format("'{}' before the 'dual' header", key));
        result.dual_records.push_back({line_no, std::vector<std::string>(tokens.begin(), tokens.end())});
      }
      continue;
    }
    if (result.dual_options) throw ParseError(line_no, "model records must precede the dual section");
    if (key == "unary") {
      if (tokens.size() < 4) throw ParseError(line_no, "expected 'unary v a0 a1 ...' with at least two states");
      const auto v = parse_number<VarId>(tokens[1], line_no, "variable id");
      if (v >= *n_vars) throw ParseError(line_no, fmt::format("variable {} out of range (vars {})", v, *n_vars));
      if (unaries[v]) throw ParseError(line_no, fmt::format("duplicate unary for variable {}", v));
      std::vector<double> values;
      for (std::size_t i = 2; i < tokens.size(); ++i) {
        const double a = parse_number<double>(tokens[i], line_no, "log-potential");
        if (!std::isfinite(a)) throw ParseError(line_no, fmt::format("variable {}: log-potential must be finite", v));
        values.push_back(a);
      }
      unaries[v] = std::move(values);
    } else if (key == "factor") {
      if (tokens.size() < 8) throw ParseError(line_no, "expected 'factor id u v t00 t01 ...'");
      PendingFactor f;
      f.line = line_no;
      f.id = parse_number<std::uint64_t>(tokens[1], line_no, "factor id");
      f.u = parse_number<VarId>(tokens[2], line_no, "variable id");
      f.v = parse_number<VarId>(tokens[3], line_no, "variable id");
      if (!pending.empty() && f.id <= pending.back().id)
        throw ParseError(line_no, fmt::format("factor {}: ids must be strictly increasing", f.id));
      for (std::size_t i = 4; i < tokens.size(); ++i)
        f.values.push_back(parse_number<double>(tokens[i], line_no, fmt::format("entry of factor {}", f.id)));
      pending.push_back(std::move(f));
    } else {
      throw ParseError(line_no, fmt::format("unknown record '{}'", key));
    }
  }
  if (!n_vars) throw ParseError(0, "missing 'vars N' header");

  Model& model = result.model;
  for (auto& u : unaries) model.add_variable(u ? std::move(*u) : std::vector<double>{0.0, 0.0});
  for (auto& f : pending) {
    if (f.u >= *n_vars || f.v >= *n_vars)
      throw ParseError(f.line, fmt::format("factor {}: variable out of range (vars {})", f.id, *n_vars));
    const std::size_t rows = model.cardinality(f.u), cols = model.cardinality(f.v);
    if (f.values.size() != rows * cols)
      throw ParseError(f.line, fmt::format("factor {}: expected {} entries, got {}", f.id, rows * cols,
                                           f.values.size()));
    try {
      model.add_factor_with_id(FactorId{f.id}, f.u, f.v, Table(rows, cols, std::move(f.values)));
    } catch (const std::exception& e) {
      throw ParseError(f.line, e.what());
    }
  }
  return result;
}

}  // namespace

Model read_model(std::istream& in) { return parse(in, false).model; }

Model model_from_string(const std::string& text) {
  std::istringstream in(text);
  return read_model(in);
}

Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open model file '{}'", path));
  return read_model(in);
}

namespace {

const char* scheme_name(DualizationScheme scheme) {
  switch (scheme) {
    case DualizationScheme::Factorized:
      return "factorized";
    case DualizationScheme::SwendsenWang:
      return "swendsen-wang";
    case DualizationScheme::Higdon:
      return "higdon";
  }
  return "factorized";
}

void write_values(std::ostream& out, const std::vector<double>& values) {
  for (double x : values) out << ' ' << format_double(x);
}

}  // namespace

void write_dual_model(std::ostream& out, const DualModel& dm) {
  const Model& base = dm.base();
  write_model(out, base);
  out << "dual " << scheme_name(dm.options().scheme);
  if (dm.options().higdon_alpha) out << ' ' << format_double(*dm.options().higdon_alpha);
  out << '\n';
  for (std::size_t index : base.indices_by_id()) {
    const std::uint64_t id = base.factors()[index].id.value;
    const FactorDual& d = dm.dual(index);
    out << "dshift " << id << " u";
    write_values(out, d.shift_u);
    out << "\ndshift " << id << " v";
    write_values(out, d.shift_v);
    out << '\n';
    for (const DualComponent& c : d.components) {
      out << "dcomp " << id << (c.kind == ComponentKind::Product ? " product " : " equality ")
          << format_double(c.log_weight);
      write_values(out, c.log_left);
      if (c.kind == ComponentKind::Product) write_values(out, c.log_right);
      out << '\n';
    }
    if (d.params) {
      const DualFactor& p = *d.params;
      out << "dparams " << id << ' ' << format_double(p.alpha1) << ' ' << format_double(p.alpha2) << ' '
          << format_double(p.q) << ' ' << format_double(p.beta1) << ' ' << format_double(p.beta2) << '\n';
    }
  }
}

std::string dual_model_to_string(const DualModel& dm) {
  std::ostringstream out;
  write_dual_model(out, dm);
  return out.str();
}

DualModel read_dual_model(std::istream& in) {
  Parsed parsed = parse(in, true);
  Model& model = parsed.model;
  if (!parsed.dual_options) return DualModel(std::move(model));

  std::vector<FactorDual> duals(model.num_factors());
  std::vector<char> has_u(model.num_factors(), 0), has_v(model.num_factors(), 0);
  for (const DualRecord& rec : parsed.dual_records) {
    const auto& t = rec.tokens;
    if (t.size() < 2) throw ParseError(rec.line, fmt::format("'{}' needs a factor id", t[0]));
    const auto id = parse_number<std::uint64_t>(t[1], rec.line, "factor id");
    if (!model.contains(FactorId{id})) throw ParseError(rec.line, fmt::format("unknown factor {}", id));
    const std::size_t index = model.factor_index(FactorId{id});
    const Factor& f = model.factors()[index];
    const std::size_t rows = f.table.rows(), cols = f.table.cols();
    FactorDual& d = duals[index];
    auto numbers = [&](std::size_t from, std::size_t count) {
      if (t.size() != from + count)
        throw ParseError(rec.line, fmt::format("factor {}: expected {} values, got {}", id, count,
                                               t.size() < from ? 0 : t.size() - from));
      std::vector<double> v;
      for (std::size_t i = from; i < t.size(); ++i)
        v.push_back(parse_number<double>(t[i], rec.line, fmt::format("value of factor {}", id)));
      return v;
    };
    if (t[0] == "dshift") {
      if (t.size() < 3 || (t[2] != "u" && t[2] != "v"))
        throw ParseError(rec.line, fmt::format("factor {}: expected 'dshift id u|v ...'", id));
      if (t[2] == "u") {
        if (has_u[index]) throw ParseError(rec.line, fmt::format("factor {}: duplicate u shift", id));
        d.shift_u = numbers(3, rows);
        has_u[index] = 1;
      } else {
        if (has_v[index]) throw ParseError(rec.line, fmt::format("factor {}: duplicate v shift", id));
        d.shift_v = numbers(3, cols);
        has_v[index] = 1;
      }
    } else if (t[0] == "dcomp") {
      if (t.size() < 4) throw ParseError(rec.line, fmt::format("factor {}: expected 'dcomp id KIND LOGW ...'", id));
      DualComponent c;
      c.log_weight = parse_number<double>(t[3], rec.line, "log weight");
      if (t[2] == "product") {
        std::vector<double> v = numbers(4, rows + cols);
        c.log_left.assign(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(rows));
        c.log_right.assign(v.begin() + static_cast<std::ptrdiff_t>(rows), v.end());
      } else if (t[2] == "equality") {
        c.kind = ComponentKind::Equality;
        c.log_left = numbers(4, rows);
      } else {
        throw ParseError(rec.line, fmt::format("factor {}: unknown component kind '{}'", id, t[2]));
      }
      d.components.push_back(std::move(c));
    } else {
      const std::vector<double> v = numbers(2, 5);
      d.params = DualFactor{v[0], v[1], v[2], v[3], v[4]};
    }
  }
  for (std::size_t i = 0; i < duals.size(); ++i)
    if (!has_u[i] || !has_v[i] || duals[i].components.empty())
      throw ParseError(parsed.dual_line,
                       fmt::format("dual section is incomplete for factor {}", model.factors()[i].id.value));
  try {
    return DualModel(std::move(model), std::move(duals), *parsed.dual_options);
  } catch (const std::invalid_argument& e) {
    throw ParseError(parsed.dual_line, e.what());
  }
}

DualModel dual_model_from_string(const std::string& text) {
  std::istringstream in(text);
  return read_dual_model(in);
}

void save_model(const std::string& path, const Model& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write model file '{}'", path));
  write_model(out, model);
  if (!out) throw std::runtime_error(fmt::format("error writing model file '{}'", path));
}

}  // namespace pdgibbs
