#include "mmsa/tabular.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace mmsa {

int TabularDecPomdp::n_joint() const {
  int j = 1;
  for (int i = 0; i < n_agents; ++i) j *= n_actions;
  return j;
}

int TabularDecPomdp::joint_index(const std::vector<int>& actions) const {
  int idx = 0;
  for (int a : actions) idx = idx * n_actions + a;
  return idx;
}

std::vector<int> TabularDecPomdp::joint_actions(int joint) const {
  std::vector<int> out(static_cast<std::size_t>(n_agents));
  for (int i = n_agents - 1; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = joint % n_actions;
    joint /= n_actions;
  }
  return out;
}

double TabularDecPomdp::trans(int s, int joint, int s_next) const {
  return transition[(static_cast<std::size_t>(s) * n_joint() + joint) * n_states + s_next];
}

double TabularDecPomdp::rew(int s, int joint) const {
  return reward[static_cast<std::size_t>(s) * n_joint() + joint];
}

int TabularDecPomdp::obs_of(int s, int agent) const {
  return obs[static_cast<std::size_t>(s) * n_agents + agent];
}

double TabularDecPomdp::pol(int agent, int o, int a) const {
  return policy[(static_cast<std::size_t>(agent) * n_obs + o) * n_actions + a];
}

void TabularDecPomdp::validate() const {
  if (n_states < 1 || n_agents < 1 || n_actions < 1 || n_obs < 1)
    throw EnvError("tabular model: sizes must be positive");
  const double tol = 1e-12;
  for (int s = 0; s < n_states; ++s)
    for (int j = 0; j < n_joint(); ++j) {
      double sum = 0.0;
      for (int s2 = 0; s2 < n_states; ++s2) sum += trans(s, j, s2);
      if (std::fabs(sum - 1.0) > tol)
        throw EnvError("tabular model: T row (s=" + std::to_string(s) + ", a=" +
                       std::to_string(j) + ") sums to " + std::to_string(sum));
    }
  double start_sum = 0.0;
  for (double p : initial_dist) start_sum += p;
  if (std::fabs(start_sum - 1.0) > tol)
    throw EnvError("tabular model: initial distribution sums to " + std::to_string(start_sum));
  for (int s = 0; s < n_states; ++s)
    for (int i = 0; i < n_agents; ++i)
      if (obs_of(s, i) < 0 || obs_of(s, i) >= n_obs)
        throw EnvError("tabular model: observation symbol out of range");
  for (int i = 0; i < n_agents; ++i)
    for (int o = 0; o < n_obs; ++o) {
      double sum = 0.0;
      for (int a = 0; a < n_actions; ++a) sum += pol(i, o, a);
      if (std::fabs(sum - 1.0) > tol)
        throw EnvError("tabular model: policy row (agent=" + std::to_string(i) + ", obs=" +
                       std::to_string(o) + ") sums to " + std::to_string(sum));
    }
}

TabularDecPomdp parse_tabular(const std::string& text) {
  TabularDecPomdp m;
  m.episode_limit = 8;
  m.gamma = 0.99;
  std::vector<std::vector<std::string>> rows;
  {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      std::istringstream ls(line);
      std::vector<std::string> fields;
      std::string f;
      while (ls >> f) fields.push_back(f);
      if (fields.empty()) continue;
      fields.push_back(std::to_string(line_no));  // keep for error messages
      rows.push_back(std::move(fields));
    }
  }

  auto line_of = [](const std::vector<std::string>& r) { return r.back(); };
  auto to_int = [&](const std::vector<std::string>& r, std::size_t i) {
    try {
      return std::stoi(r.at(i));
    } catch (const std::exception&) {
      throw EnvError("tabular file line " + line_of(r) + ": bad integer field " +
                     std::to_string(i));
    }
  };
  auto to_double = [&](const std::vector<std::string>& r, std::size_t i) {
    try {
      return std::stod(r.at(i));
    } catch (const std::exception&) {
      throw EnvError("tabular file line " + line_of(r) + ": bad numeric field " +
                     std::to_string(i));
    }
  };

  // header pass
  for (const auto& r : rows) {
    if (r[0] == "states") m.n_states = to_int(r, 1);
    else if (r[0] == "agents") m.n_agents = to_int(r, 1);
    else if (r[0] == "actions") m.n_actions = to_int(r, 1);
    else if (r[0] == "obs" && r.size() == 3) m.n_obs = to_int(r, 1);
    else if (r[0] == "limit") m.episode_limit = to_int(r, 1);
    else if (r[0] == "gamma") m.gamma = to_double(r, 1);
  }
  if (m.n_states < 1 || m.n_agents < 1 || m.n_actions < 1 || m.n_obs < 1)
    throw EnvError("tabular file: header must set states, agents, actions, obs");

  m.transition.assign(static_cast<std::size_t>(m.n_states) * m.n_joint() * m.n_states, 0.0);
  m.reward.assign(static_cast<std::size_t>(m.n_states) * m.n_joint(), 0.0);
  m.obs.assign(static_cast<std::size_t>(m.n_states) * m.n_agents, 0);
  m.initial_dist.assign(static_cast<std::size_t>(m.n_states), 0.0);
  m.policy.assign(static_cast<std::size_t>(m.n_agents) * m.n_obs * m.n_actions, 0.0);
  bool any_start = false, any_pol = false;

  const std::size_t na = static_cast<std::size_t>(m.n_agents);
  for (const auto& r : rows) {
    auto joint_of = [&](std::size_t first) {
      std::vector<int> a(na);
      for (std::size_t i = 0; i < na; ++i) {
        a[i] = to_int(r, first + i);
        if (a[i] < 0 || a[i] >= m.n_actions)
          throw EnvError("tabular file line " + line_of(r) + ": action out of range");
      }
      return m.joint_index(a);
    };
    auto check_state = [&](int s) {
      if (s < 0 || s >= m.n_states)
        throw EnvError("tabular file line " + line_of(r) + ": state out of range");
      return s;
    };
    if (r[0] == "T") {
      if (r.size() != na + 5) throw EnvError("tabular file line " + line_of(r) + ": T row arity");
      const int s = check_state(to_int(r, 1));
      const int j = joint_of(2);
      const int s2 = check_state(to_int(r, 2 + na));
      m.transition[(static_cast<std::size_t>(s) * m.n_joint() + j) * m.n_states + s2] =
          to_double(r, 3 + na);
    } else if (r[0] == "R") {
      if (r.size() != na + 4) throw EnvError("tabular file line " + line_of(r) + ": R row arity");
      const int s = check_state(to_int(r, 1));
      m.reward[static_cast<std::size_t>(s) * m.n_joint() + joint_of(2)] = to_double(r, 2 + na);
    } else if (r[0] == "O") {
      if (r.size() != 5) throw EnvError("tabular file line " + line_of(r) + ": O row arity");
      const int s = check_state(to_int(r, 1));
      const int agent = to_int(r, 2);
      if (agent < 0 || agent >= m.n_agents)
        throw EnvError("tabular file line " + line_of(r) + ": agent out of range");
      m.obs[static_cast<std::size_t>(s) * na + agent] = to_int(r, 3);
    } else if (r[0] == "start") {
      if (r.size() != 4) throw EnvError("tabular file line " + line_of(r) + ": start row arity");
      m.initial_dist[static_cast<std::size_t>(check_state(to_int(r, 1)))] = to_double(r, 2);
      any_start = true;
    } else if (r[0] == "pol") {
      if (r.size() != 6) throw EnvError("tabular file line " + line_of(r) + ": pol row arity");
      const int agent = to_int(r, 1), o = to_int(r, 2), a = to_int(r, 3);
      if (agent < 0 || agent >= m.n_agents || o < 0 || o >= m.n_obs || a < 0 || a >= m.n_actions)
        throw EnvError("tabular file line " + line_of(r) + ": pol indices out of range");
      m.policy[(static_cast<std::size_t>(agent) * m.n_obs + o) * m.n_actions + a] =
          to_double(r, 4);
      any_pol = true;
    } else if (r[0] == "states" || r[0] == "agents" || r[0] == "actions" || r[0] == "obs" ||
               r[0] == "limit" || r[0] == "gamma") {
      // header, already consumed
    } else {
      throw EnvError("tabular file line " + line_of(r) + ": unknown row type \"" + r[0] + "\"");
    }
  }
  if (!any_start)
    m.initial_dist.assign(static_cast<std::size_t>(m.n_states), 1.0 / m.n_states);
  if (!any_pol)
    m.policy.assign(static_cast<std::size_t>(m.n_agents) * m.n_obs * m.n_actions,
                    1.0 / m.n_actions);
  m.validate();
  return m;
}

TabularDecPomdp load_tabular(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw EnvError("tabular file: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_tabular(ss.str());
}

namespace {
// Draws a strictly positive normalized row (Dirichlet-like from uniforms).
void random_dist(Rng& rng, double* out, int n) {
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = 0.05 + rng.uniform();
    sum += out[i];
  }
  for (int i = 0; i < n; ++i) out[i] /= sum;
}
}  // namespace

TabularDecPomdp make_random_tabular(Rng& rng, int n_states, int n_agents, int n_actions,
                                    int n_obs, int episode_limit) {
  TabularDecPomdp m;
  m.n_states = n_states;
  m.n_agents = n_agents;
  m.n_actions = n_actions;
  m.n_obs = n_obs;
  m.episode_limit = episode_limit;
  m.gamma = 0.99;
  const int nj = m.n_joint();
  m.transition.resize(static_cast<std::size_t>(n_states) * nj * n_states);
  m.reward.resize(static_cast<std::size_t>(n_states) * nj);
  m.obs.resize(static_cast<std::size_t>(n_states) * n_agents);
  m.initial_dist.resize(static_cast<std::size_t>(n_states));
  m.policy.resize(static_cast<std::size_t>(n_agents) * n_obs * n_actions);

  for (int s = 0; s < n_states; ++s)
    for (int j = 0; j < nj; ++j)
      random_dist(rng, &m.transition[(static_cast<std::size_t>(s) * nj + j) * n_states], n_states);
  for (auto& r : m.reward) r = rng.uniform(-1.0, 1.0);
  for (auto& o : m.obs) o = rng.uniform_int(n_obs);
  random_dist(rng, m.initial_dist.data(), n_states);
  for (int i = 0; i < n_agents; ++i)
    for (int o = 0; o < n_obs; ++o)
      random_dist(rng, &m.policy[(static_cast<std::size_t>(i) * n_obs + o) * n_actions], n_actions);
  m.validate();
  return m;
}

TabularEnv::TabularEnv(TabularDecPomdp model, double gamma, int episode_limit_override)
    : model_(std::move(model)) {
  model_.validate();
  spec_.n_agents = model_.n_agents;
  spec_.n_actions = model_.n_actions;
  spec_.obs_dim = model_.n_obs;
  spec_.state_dim = model_.n_states;
  spec_.episode_limit = episode_limit_override > 0 ? episode_limit_override : model_.episode_limit;
  spec_.gamma = gamma;
}

StepResult TabularEnv::reset(std::uint64_t seed) {
  rng_ = Rng(seed, 0x7461627565ULL);
  double u = rng_.uniform(), acc = 0.0;
  state_ = model_.n_states - 1;
  for (int s = 0; s < model_.n_states; ++s) {
    acc += model_.initial_dist[static_cast<std::size_t>(s)];
    if (u < acc) {
      state_ = s;
      break;
    }
  }
  step_count_ = 0;
  done_ = false;
  return observe(0.0, false);
}

StepResult TabularEnv::step(const std::vector<int>& joint_action) {
  if (done_) throw EnvError("tabular env: step on a finished episode");
  if (static_cast<int>(joint_action.size()) != model_.n_agents)
    throw EnvError("tabular env: joint action size mismatch");
  for (int a : joint_action)
    if (a < 0 || a >= model_.n_actions) throw EnvError("tabular env: action out of range");
  const int j = model_.joint_index(joint_action);
  const double r = model_.rew(state_, j);
  double u = rng_.uniform(), acc = 0.0;
  int next = model_.n_states - 1;
  for (int s2 = 0; s2 < model_.n_states; ++s2) {
    acc += model_.trans(state_, j, s2);
    if (u < acc) {
      next = s2;
      break;
    }
  }
  state_ = next;
  ++step_count_;
  const bool truncated = step_count_ >= spec_.episode_limit;
  done_ = truncated;
  return observe(r, truncated);
}

StepResult TabularEnv::observe(double reward, bool truncated) const {
  StepResult r;
  r.reward = reward;
  r.truncated = truncated;
  r.global_state.assign(static_cast<std::size_t>(model_.n_states), 0.0);
  r.global_state[static_cast<std::size_t>(state_)] = 1.0;
  for (int i = 0; i < model_.n_agents; ++i) {
    std::vector<double> o(static_cast<std::size_t>(model_.n_obs), 0.0);
    o[static_cast<std::size_t>(model_.obs_of(state_, i))] = 1.0;
    r.observations.push_back(std::move(o));
    r.avail_actions.emplace_back(static_cast<std::size_t>(model_.n_actions), std::uint8_t{1});
  }
  return r;
}

}  // namespace mmsa
