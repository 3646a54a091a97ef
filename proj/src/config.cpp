#include "tflow/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "tflow/errors.hpp"
#include "tflow/observables.hpp"

namespace tflow {

namespace {

struct KV {
  int line = 0;
  int col = 0;       // of the key
  int vcol = 0;      // of the value
  std::string key;
  std::string value;
  bool used = false;
};

struct Section {
  int line = 0;
  std::string name;
  std::vector<KV> kvs;
};

size_t skip_ws(const std::string& s, size_t i) {
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  return i;
}

std::string rtrim(std::string s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.pop_back();
  return s;
}

std::vector<Section> tokenize(const std::string& text) {
  std::vector<Section> out;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    // comments start at # or ; anywhere in the line
    const size_t cpos = raw.find_first_of("#;");
    std::string line = rtrim(cpos == std::string::npos ? raw : raw.substr(0, cpos));
    const size_t start = skip_ws(line, 0);
    if (start >= line.size()) continue;
    if (line[start] == '[') {
      const size_t close = line.find(']', start);
      if (close == std::string::npos)
        throw ParseError("unterminated section header", lineno, static_cast<int>(start) + 1);
      if (rtrim(line.substr(close + 1)).find_first_not_of(" \t") != std::string::npos)
        throw ParseError("trailing characters after section header", lineno,
                         static_cast<int>(close) + 2);
      Section s;
      s.line = lineno;
      s.name = line.substr(start + 1, close - start - 1);
      if (s.name.empty()) throw ParseError("empty section name", lineno, static_cast<int>(start) + 1);
      out.push_back(std::move(s));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("expected key = value", lineno, static_cast<int>(start) + 1);
    if (out.empty())
      throw ParseError("key outside any section", lineno, static_cast<int>(start) + 1);
    KV kv;
    kv.line = lineno;
    kv.col = static_cast<int>(start) + 1;
    kv.key = rtrim(line.substr(start, eq - start));
    const size_t vstart = skip_ws(line, eq + 1);
    kv.vcol = static_cast<int>(vstart) + 1;
    kv.value = rtrim(line.substr(vstart));
    if (kv.key.empty()) throw ParseError("empty key", lineno, kv.col);
    if (kv.value.empty()) throw ParseError("empty value for '" + kv.key + "'", lineno, kv.vcol);
    out.back().kvs.push_back(std::move(kv));
  }
  return out;
}

double parse_double_at(const std::string& s, int line, int col) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) throw ParseError("malformed number '" + s + "'", line, col);
  return v;
}

long parse_int_at(const std::string& s, int line, int col) {
  long v = 0;
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) throw ParseError("malformed integer '" + s + "'", line, col);
  return v;
}

std::vector<double> parse_double_list(const KV& kv) {
  std::vector<double> out;
  std::string norm = kv.value;
  for (char& ch : norm)
    if (ch == ',') ch = ' ';
  std::istringstream nin(norm);
  std::string item;
  while (nin >> item) out.push_back(parse_double_at(item, kv.line, kv.vcol));
  if (out.empty()) throw ParseError("empty list", kv.line, kv.vcol);
  return out;
}

// Fetch a unique key from a section; marks it used.
KV* find_kv(Section& s, const std::string& key) {
  KV* hit = nullptr;
  for (auto& kv : s.kvs)
    if (kv.key == key) {
      if (hit) throw ParseError("duplicate key '" + key + "'", kv.line, kv.col);
      hit = &kv;
    }
  if (hit) hit->used = true;
  return hit;
}

void reject_unused(const Section& s) {
  for (const auto& kv : s.kvs)
    if (!kv.used)
      throw ParseError("unknown key '" + kv.key + "' in [" + s.name + "]", kv.line, kv.col);
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

}  // namespace

TemperaturePath RunConfig::make_path() const {
  if (path_kind == "simultaneous") return TemperaturePath::simultaneous(model, T_start, T_floor);
  if (path_kind == "sequential") return TemperaturePath::sequential(model, T_start, T_floor);
  if (path_kind == "table") return TemperaturePath::table(path_rows);
  throw ValidationError("unknown path kind '" + path_kind + "'");
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  auto sections = tokenize(text);

  int n_v = -1, n_w = -1;  // resolved after [grid], defaults scale with it
  bool seen_model = false, seen_grid = false, seen_vertex = false, seen_stepper = false;
  bool seen_path = false, seen_init = false, seen_output = false;

  for (auto& s : sections) {
    if (s.name == "model") {
      if (seen_model) throw ParseError("duplicate section [model]", s.line, 1);
      seen_model = true;
      if (KV* kv = find_kv(s, "epsilon")) cfg.model.epsilon = parse_double_at(kv->value, kv->line, kv->vcol);
      if (KV* kv = find_kv(s, "U")) cfg.model.U = parse_double_at(kv->value, kv->line, kv->vcol);
      reject_unused(s);
    } else if (s.name.rfind("reservoir.", 0) == 0) {
      const std::string name = s.name.substr(10);
      if (name.empty()) throw ParseError("empty reservoir name", s.line, 1);
      for (const auto& existing : cfg.reservoir_names)
        if (existing == name)
          throw ParseError("duplicate section [reservoir." + name + "]", s.line, 1);
      Reservoir r;
      if (KV* kv = find_kv(s, "gamma_up")) r.gamma_up = parse_double_at(kv->value, kv->line, kv->vcol);
      if (KV* kv = find_kv(s, "gamma_dn")) r.gamma_dn = parse_double_at(kv->value, kv->line, kv->vcol);
      if (KV* kv = find_kv(s, "mu")) r.mu = parse_double_at(kv->value, kv->line, kv->vcol);
      if (KV* kv = find_kv(s, "T_final")) r.T_final = parse_double_at(kv->value, kv->line, kv->vcol);
      reject_unused(s);
      cfg.model.reservoirs.push_back(r);
      cfg.reservoir_names.push_back(name);
    } else if (s.name == "grid") {
      if (seen_grid) throw ParseError("duplicate section [grid]", s.line, 1);
      seen_grid = true;
      if (KV* kv = find_kv(s, "t_max")) cfg.grid.t_max = parse_double_at(kv->value, kv->line, kv->vcol);
      if (KV* kv = find_kv(s, "n")) cfg.grid.n = static_cast<int>(parse_int_at(kv->value, kv->line, kv->vcol));
      reject_unused(s);
    } else if (s.name == "vertex_grid") {
      if (seen_vertex) throw ParseError("duplicate section [vertex_grid]", s.line, 1);
      seen_vertex = true;
      if (KV* kv = find_kv(s, "n_v")) n_v = static_cast<int>(parse_int_at(kv->value, kv->line, kv->vcol));
      if (KV* kv = find_kv(s, "n_w")) n_w = static_cast<int>(parse_int_at(kv->value, kv->line, kv->vcol));
      reject_unused(s);
    } else if (s.name == "stepper") {
      if (seen_stepper) throw ParseError("duplicate section [stepper]", s.line, 1);
      seen_stepper = true;
      auto& st = cfg.stepper;
      if (KV* kv = find_kv(s, "tol")) st.tol = parse_double_at(kv->value, kv->line, kv->vcol);
      if (KV* kv = find_kv(s, "dtheta_init")) st.dtheta_init = parse_double_at(kv->value, kv->line, kv->vcol);
      if (KV* kv = find_kv(s, "dtheta_min")) st.dtheta_min = parse_double_at(kv->value, kv->line, kv->vcol);
      if (KV* kv = find_kv(s, "safety")) st.safety = parse_double_at(kv->value, kv->line, kv->vcol);
      if (KV* kv = find_kv(s, "grow_max")) st.grow_max = parse_double_at(kv->value, kv->line, kv->vcol);
      if (KV* kv = find_kv(s, "shrink_min")) st.shrink_min = parse_double_at(kv->value, kv->line, kv->vcol);
      if (KV* kv = find_kv(s, "bootstrap_fixpoint_iters"))
        st.bootstrap_fixpoint_iters = static_cast<int>(parse_int_at(kv->value, kv->line, kv->vcol));
      if (KV* kv = find_kv(s, "max_steps")) st.max_steps = static_cast<int>(parse_int_at(kv->value, kv->line, kv->vcol));
      reject_unused(s);
    } else if (s.name == "path") {
      if (seen_path) throw ParseError("duplicate section [path]", s.line, 1);
      seen_path = true;
      if (KV* kv = find_kv(s, "kind")) cfg.path_kind = kv->value;
      if (KV* kv = find_kv(s, "T_start")) cfg.T_start = parse_double_at(kv->value, kv->line, kv->vcol);
      if (KV* kv = find_kv(s, "T_floor")) cfg.T_floor = parse_double_at(kv->value, kv->line, kv->vcol);
      for (auto& kv : s.kvs) {
        if (kv.key != "row") continue;
        kv.used = true;
        const std::vector<double> nums = parse_double_list(kv);
        if (nums.size() < 2)
          throw ParseError("path row needs theta plus one temperature per reservoir", kv.line,
                           kv.vcol);
        TemperaturePath::Row row;
        row.theta = nums.front();
        row.T.assign(nums.begin() + 1, nums.end());
        cfg.path_rows.push_back(std::move(row));
      }
      reject_unused(s);
    } else if (s.name == "initial_state") {
      if (seen_init) throw ParseError("duplicate section [initial_state]", s.line, 1);
      seen_init = true;
      if (KV* kv = find_kv(s, "name")) cfg.initial_state = kv->value;
      reject_unused(s);
    } else if (s.name == "output") {
      if (seen_output) throw ParseError("duplicate section [output]", s.line, 1);
      seen_output = true;
      if (KV* kv = find_kv(s, "record_temperatures")) cfg.record_temperatures = parse_double_list(*kv);
      reject_unused(s);
    } else {
      throw ParseError("unknown section [" + s.name + "]", s.line, 1);
    }
  }

  // ---- semantic validation ----
  require(!cfg.model.reservoirs.empty(), "at least one [reservoir.*] section is required");
  for (size_t i = 0; i < cfg.model.reservoirs.size(); ++i) {
    const auto& r = cfg.model.reservoirs[i];
    require(r.gamma_up >= 0.0 && r.gamma_dn >= 0.0,
            "negative coupling in reservoir '" + cfg.reservoir_names[i] + "'");
    require(r.T_final >= 0.0,
            "negative final temperature in reservoir '" + cfg.reservoir_names[i] + "'");
  }
  require(cfg.grid.t_max > 0.0, "grid t_max must be positive");
  require(cfg.grid.n >= 8, "grid n must be at least 8");
  if (n_v < 0) n_v = std::min(32, cfg.grid.n);
  if (n_w < 0) n_w = std::min(9, n_v);
  require(n_v >= 4 && n_v <= cfg.grid.n, "vertex_grid n_v out of range");
  require(n_w >= 4 && n_w <= n_v, "vertex_grid n_w out of range");
  cfg.vertex.v = TimeGrid{cfg.grid.t_max, n_v};
  cfg.vertex.w = TimeGrid{cfg.grid.t_max, n_w};

  const auto& st = cfg.stepper;
  require(st.tol > 0.0, "stepper tol must be positive");
  require(st.dtheta_init > 0.0, "stepper dtheta_init must be positive");
  require(st.dtheta_min > 0.0 && st.dtheta_min < st.dtheta_init,
          "stepper dtheta_min must lie in (0, dtheta_init)");
  require(st.safety > 0.0 && st.safety <= 1.0, "stepper safety must lie in (0, 1]");
  require(st.shrink_min > 0.0 && st.shrink_min < 1.0, "stepper shrink_min must lie in (0, 1)");
  require(st.grow_max > 1.0, "stepper grow_max must exceed 1");
  require(st.bootstrap_fixpoint_iters >= 1, "stepper bootstrap_fixpoint_iters must be >= 1");
  require(st.max_steps >= 10, "stepper max_steps must be >= 10");

  if (cfg.path_kind == "table") {
    require(!cfg.path_rows.empty(), "path kind table needs at least two row entries");
    for (const auto& row : cfg.path_rows)
      require(row.T.size() == cfg.model.reservoirs.size(),
              "path row arity does not match the reservoir count");
  } else {
    require(cfg.path_kind == "simultaneous" || cfg.path_kind == "sequential",
            "unknown path kind '" + cfg.path_kind + "'");
    require(cfg.path_rows.empty(), "row entries are only valid for path kind table");
    require(cfg.T_start > cfg.T_floor, "path needs T_start > T_floor");
    require(cfg.T_floor >= 0.0, "path T_floor must be nonnegative");
  }
  initial_density(cfg.initial_state);  // name check only

  const TemperaturePath path = cfg.make_path();  // validates table rows as well
  for (double rec : cfg.record_temperatures)
    require(rec <= path.theta_start() && rec >= path.theta_end(),
            "record temperature outside the flow range");
  return cfg;
}

RunConfig load_config(const std::string& filename) {
  std::ifstream in(filename, std::ios::binary);
  if (!in) throw FormatError("cannot open config file '" + filename + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace tflow
