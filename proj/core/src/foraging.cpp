#include "mmsa/foraging.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace mmsa {

namespace {

// Splits "2s-5x5-2p-1f-coop-v2" into dash tokens.
std::vector<std::string> dash_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find('-', start);
    if (end == std::string::npos) end = s.size();
    out.push_back(s.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

bool parse_suffixed(const std::string& tok, char suffix, int& out) {
  if (tok.size() < 2 || tok.back() != suffix) return false;
  for (std::size_t i = 0; i + 1 < tok.size(); ++i)
    if (!std::isdigit(static_cast<unsigned char>(tok[i]))) return false;
  out = std::stoi(tok.substr(0, tok.size() - 1));
  return true;
}

}  // namespace

ForagingTemplate parse_foraging_template(const std::string& name) {
  std::string body = name;
  if (body.rfind("Foraging-", 0) == 0) body = body.substr(9);
  else if (body.rfind("Foraging", 0) == 0) body = body.substr(8);

  ForagingTemplate tpl;
  auto toks = dash_tokens(body);
  std::size_t i = 0;
  auto fail = [&](const std::string& why) {
    throw EnvError("foraging template \"" + name + "\": " + why + " at token " +
                   std::to_string(i));
  };
  if (toks.empty()) fail("empty template");

  // optional sight token "Ns"
  int sight;
  if (parse_suffixed(toks[i], 's', sight)) {
    tpl.sight = sight;
    ++i;
  }
  // grid "XxY" (x_size x y_size == cols x rows)
  if (i >= toks.size()) fail("missing grid size");
  {
    const std::string& g = toks[i];
    std::size_t x = g.find('x');
    if (x == std::string::npos || x == 0 || x + 1 >= g.size()) fail("malformed grid size");
    try {
      tpl.cols = std::stoi(g.substr(0, x));
      tpl.rows = std::stoi(g.substr(x + 1));
    } catch (const std::exception&) {
      fail("malformed grid size");
    }
    ++i;
  }
  if (i >= toks.size() || !parse_suffixed(toks[i], 'p', tpl.n_agents)) fail("missing agent count (Np)");
  ++i;
  if (i >= toks.size() || !parse_suffixed(toks[i], 'f', tpl.n_food)) fail("missing food count (Nf)");
  ++i;
  if (i < toks.size() && toks[i] == "coop") {
    tpl.coop = true;
    ++i;
  }
  if (i >= toks.size() || toks[i] != "v2") fail("missing v2 suffix");
  ++i;
  if (i != toks.size()) fail("trailing tokens");

  if (tpl.rows < 3 || tpl.cols < 3) fail("grid must be at least 3x3");
  if (tpl.n_agents < 1 || tpl.n_food < 1) fail("need at least one agent and one food");
  if (tpl.n_agents + tpl.n_food > tpl.rows * tpl.cols) fail("grid too small for entities");
  return tpl;
}

ForagingEnv::ForagingEnv(const ForagingTemplate& tpl, double gamma, int episode_limit) : tpl_(tpl) {
  spec_.n_agents = tpl.n_agents;
  spec_.n_actions = 6;
  spec_.obs_dim = 3 * tpl.n_food + 3 * (tpl.n_agents - 1) + 1;
  spec_.state_dim = 3 * (tpl.n_food + tpl.n_agents);
  spec_.episode_limit = episode_limit;
  spec_.gamma = gamma;
}

bool ForagingEnv::cell_free(int x, int y) const {
  for (const Entity& f : foods_)
    if (f.active && f.x == x && f.y == y) return false;
  for (const Entity& a : agents_)
    if (a.x == x && a.y == y) return false;
  return true;
}

bool ForagingEnv::food_adjacent(int x, int y) const {
  for (const Entity& f : foods_)
    if (f.active && std::abs(f.x - x) + std::abs(f.y - y) == 1) return true;
  return false;
}

StepResult ForagingEnv::reset(std::uint64_t seed) {
  Rng rng(seed, 0x666f7261676500ULL);
  const int cells = tpl_.rows * tpl_.cols;
  auto picks = rng.sample_without_replacement(cells, tpl_.n_food + tpl_.n_agents);

  foods_.assign(static_cast<std::size_t>(tpl_.n_food), Entity{});
  agents_.assign(static_cast<std::size_t>(tpl_.n_agents), Entity{});
  const int team_level = tpl_.n_agents;  // all agents are level 1
  total_food_level_ = 0.0;
  for (int f = 0; f < tpl_.n_food; ++f) {
    Entity& e = foods_[static_cast<std::size_t>(f)];
    e.x = picks[static_cast<std::size_t>(f)] % tpl_.cols;
    e.y = picks[static_cast<std::size_t>(f)] / tpl_.cols;
    e.level = tpl_.coop ? team_level
                        : 1 + (team_level > 1 ? rng.uniform_int(team_level - 1) : 0);
    e.active = true;
    total_food_level_ += e.level;
  }
  for (int a = 0; a < tpl_.n_agents; ++a) {
    Entity& e = agents_[static_cast<std::size_t>(a)];
    e.x = picks[static_cast<std::size_t>(tpl_.n_food + a)] % tpl_.cols;
    e.y = picks[static_cast<std::size_t>(tpl_.n_food + a)] / tpl_.cols;
    e.level = 1;
    e.active = true;
  }
  step_count_ = 0;
  done_ = false;
  return observe(0.0, false, false);
}

std::vector<std::uint8_t> ForagingEnv::avail_for(int agent) const {
  const Entity& a = agents_[static_cast<std::size_t>(agent)];
  std::vector<std::uint8_t> avail(6, 0);
  avail[0] = 1;  // None
  const int dx[4] = {0, 0, 1, -1}, dy[4] = {-1, 1, 0, 0};  // N, S, E, W
  for (int m = 0; m < 4; ++m) {
    const int nx = a.x + dx[m], ny = a.y + dy[m];
    avail[static_cast<std::size_t>(1 + m)] = in_bounds(nx, ny) && cell_free(nx, ny);
  }
  avail[5] = food_adjacent(a.x, a.y);
  return avail;
}

StepResult ForagingEnv::step(const std::vector<int>& joint_action) {
  if (done_) throw EnvError("foraging: step on a finished episode");
  if (static_cast<int>(joint_action.size()) != tpl_.n_agents)
    throw EnvError("foraging: joint action size mismatch");
  for (int i = 0; i < tpl_.n_agents; ++i) {
    const int a = joint_action[static_cast<std::size_t>(i)];
    if (a < 0 || a >= 6) throw EnvError("foraging: action out of range");
    if (!avail_for(i)[static_cast<std::size_t>(a)])
      throw EnvError("foraging: agent " + std::to_string(i) + " chose unavailable action " +
                     std::to_string(a));
  }

  // Movement in ascending agent index against live occupancy: earlier agents
  // claim cells first, so simultaneous conflicts resolve to the lowest index.
  const int dx[4] = {0, 0, 1, -1}, dy[4] = {-1, 1, 0, 0};
  for (int i = 0; i < tpl_.n_agents; ++i) {
    const int act = joint_action[static_cast<std::size_t>(i)];
    if (act < 1 || act > 4) continue;
    Entity& a = agents_[static_cast<std::size_t>(i)];
    const int nx = a.x + dx[act - 1], ny = a.y + dy[act - 1];
    if (in_bounds(nx, ny) && cell_free(nx, ny)) {
      a.x = nx;
      a.y = ny;
    }
  }

  // Loading: each active food is collected when the levels of orthogonally
  // adjacent loading agents sum to its level or more.
  double reward = 0.0;
  for (Entity& f : foods_) {
    if (!f.active) continue;
    int load_level = 0;
    for (int i = 0; i < tpl_.n_agents; ++i) {
      if (joint_action[static_cast<std::size_t>(i)] != 5) continue;
      const Entity& a = agents_[static_cast<std::size_t>(i)];
      if (std::abs(f.x - a.x) + std::abs(f.y - a.y) == 1) load_level += a.level;
    }
    if (load_level >= f.level) {
      reward += f.level / total_food_level_;
      f.active = false;
    }
  }

  ++step_count_;
  const bool terminated = std::none_of(foods_.begin(), foods_.end(),
                                       [](const Entity& f) { return f.active; });
  const bool truncated = !terminated && step_count_ >= spec_.episode_limit;
  done_ = terminated || truncated;
  return observe(reward, terminated, truncated);
}

StepResult ForagingEnv::observe(double reward, bool terminated, bool truncated) const {
  StepResult r;
  r.reward = reward;
  r.terminated = terminated;
  r.truncated = truncated;

  for (const Entity& f : foods_) {
    if (f.active) {
      r.global_state.insert(r.global_state.end(),
                            {double(f.x), double(f.y), double(f.level)});
    } else {
      r.global_state.insert(r.global_state.end(), {-1.0, -1.0, -1.0});
    }
  }
  for (const Entity& a : agents_)
    r.global_state.insert(r.global_state.end(), {double(a.x), double(a.y), double(a.level)});

  for (int i = 0; i < tpl_.n_agents; ++i) {
    const Entity& self = agents_[static_cast<std::size_t>(i)];
    auto visible = [&](const Entity& e) {
      if (!e.active) return false;
      if (tpl_.sight < 0) return true;
      return std::max(std::abs(e.x - self.x), std::abs(e.y - self.y)) <= tpl_.sight;
    };
    std::vector<double> obs;
    obs.reserve(static_cast<std::size_t>(spec_.obs_dim));
    for (const Entity& f : foods_) {
      if (visible(f))
        obs.insert(obs.end(), {double(f.x - self.x), double(f.y - self.y), double(f.level)});
      else
        obs.insert(obs.end(), {-1.0, -1.0, -1.0});
    }
    for (int j = 0; j < tpl_.n_agents; ++j) {
      if (j == i) continue;
      const Entity& other = agents_[static_cast<std::size_t>(j)];
      if (visible(other))
        obs.insert(obs.end(),
                   {double(other.x - self.x), double(other.y - self.y), double(other.level)});
      else
        obs.insert(obs.end(), {-1.0, -1.0, -1.0});
    }
    obs.push_back(double(self.level));
    r.observations.push_back(std::move(obs));
    r.avail_actions.push_back(done_ ? std::vector<std::uint8_t>(6, 1) : avail_for(i));
  }
  return r;
}

}  // namespace mmsa
