#include "properties.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

#include "eclab/agents.hpp"
#include "eclab/game.hpp"
#include "eclab/meanings.hpp"
#include "eclab/neural_stack.hpp"
#include "eclab/ops.hpp"

namespace eclab::checks {
namespace {

using V = Var<double>;
using Tn = Tensor<double>;

constexpr double kStep = 1e-5;
constexpr int kResamples = 50;

std::string fmt(double x) {
  std::ostringstream o;
  o << x;
  return o.str();
}

Tn scalar_matrix(double v) { return Tn::matrix(1, 1, v); }

// Reduces an arbitrary output to a scalar with fixed random weights so every
// output coordinate contributes with a distinct sensitivity.
V weighted_sum(Tape<double>& tape, V y, std::uint64_t seed) {
  Rng rng(seed);
  return ops::sum(y * tape.constant(random_tensor(y.shape(), rng)));
}

// Retries with fresh inputs until the point is at least 10 steps away from
// every max/min kink.
struct KinkFreeResult {
  double error = 0.0;
  bool found = false;
};

KinkFreeResult kink_free(const std::function<std::pair<ScalarFn, Tn>(std::uint64_t)>& make, std::uint64_t seed) {
  for (int attempt = 0; attempt < kResamples; ++attempt) {
    auto [f, x] = make(seed + 7919u * static_cast<std::uint64_t>(attempt));
    auto r = grad_check(f, x, kStep);
    if (r.kink_margin >= 10.0 * kStep) return {r.max_relative_error, true};
  }
  return {};
}

}  // namespace

Tensor<double> random_tensor(const Shape& shape, Rng& rng, double lo, double hi) {
  Tn t(shape);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

Outcome discrete_stack_oracle(int sequences, std::uint64_t seed) {
  Rng rng(seed);
  constexpr std::size_t W = 4;
  double worst = 0.0;
  for (int s = 0; s < sequences; ++s) {
    Tape<double> tape(false);
    auto state = make_stack<double>(1, W);
    std::vector<std::vector<double>> oracle;
    const int length = 1 + static_cast<int>(rng.below(20));
    for (int t = 0; t < length; ++t) {
      const bool pop = rng.below(2) == 1, push = rng.below(2) == 1;
      Tn v = random_tensor({1, W}, rng);
      if (pop && !oracle.empty()) oracle.pop_back();
      if (push) oracle.emplace_back(v.data().begin(), v.data().end());
      auto step = stack_step(tape, state,
                             StackDirectives<double>{tape.constant(v), tape.constant(scalar_matrix(pop)),
                                                     tape.constant(scalar_matrix(push)), tape.constant(scalar_matrix(1))});
      state = step.state;
      for (std::size_t j = 0; j < W; ++j) {
        const double expected = oracle.empty() ? 0.0 : oracle.back()[j];
        worst = std::max(worst, std::abs(step.read.value()[j] - expected));
      }
    }
  }
  return {worst <= 1e-6, "max |read - top| = " + fmt(worst) + " over " + std::to_string(sequences) + " sequences"};
}

Outcome stack_conservation(int steps, std::uint64_t seed) {
  Rng rng(seed);
  constexpr std::size_t B = 4, W = 3;
  double worst = 0.0;
  int done = 0;
  while (done < steps) {
    Tape<double> tape(false);
    auto state = make_stack<double>(B, W);
    for (int t = 0; t < 25 && done < steps; ++t, ++done) {
      Tn u = random_tensor({B, 1}, rng, 0.0, 2.0), d = random_tensor({B, 1}, rng, 0.0, 2.0),
         r = random_tensor({B, 1}, rng, 0.0, 2.0);
      Tn v = random_tensor({B, W}, rng);
      for (std::size_t b = 0; b < B; ++b) v(b, W - 1) = 1.0;  // read mass lands in the last column
      const Tn before = total_strength(tape, state).value();
      auto popped = stack_pop(state, tape.constant(u));
      const Tn after_pop = total_strength(tape, popped).value();
      auto pushed = stack_push(popped, tape.constant(v), tape.constant(d));
      const Tn after_push = total_strength(tape, pushed).value();
      const Tn read = stack_read(tape, pushed, tape.constant(r)).value();
      for (std::size_t b = 0; b < B; ++b) {
        worst = std::max(worst, std::abs(after_pop[b] - std::max(0.0, before[b] - u[b])));
        worst = std::max(worst, std::abs(after_push[b] - (after_pop[b] + d[b])));
        worst = std::max(worst, std::abs(read(b, W - 1) - std::min(r[b], after_push[b])));
      }
      state = prune(pushed);
    }
  }
  return {worst <= 1e-9, "max law violation = " + fmt(worst) + " over " + std::to_string(steps) + " steps"};
}

Outcome op_gradients(std::uint64_t seed) {
  using Unary = std::function<V(Tape<double>&, V, Rng&)>;
  const std::vector<std::pair<std::string, Unary>> cases = {
      {"matmul(x, c)", [](auto& t, V x, Rng& g) { return ops::matmul(x, t.constant(random_tensor({4, 5}, g))); }},
      {"matmul(c, x)", [](auto& t, V x, Rng& g) { return ops::matmul(t.constant(random_tensor({2, 3}, g)), x); }},
      {"add", [](auto& t, V x, Rng& g) { return ops::add(x, t.constant(random_tensor(x.shape(), g))); }},
      {"sub(c, x)", [](auto& t, V x, Rng& g) { return ops::sub(t.constant(random_tensor(x.shape(), g)), x); }},
      {"mul", [](auto& t, V x, Rng& g) { return ops::mul(x, t.constant(random_tensor(x.shape(), g))); }},
      {"mul(x, x)", [](auto&, V x, Rng&) { return ops::mul(x, x); }},
      {"add_scalar", [](auto&, V x, Rng&) { return ops::add_scalar(x, 0.3); }},
      {"scale", [](auto&, V x, Rng&) { return ops::scale(x, -1.7); }},
      {"maximum(x, c)", [](auto& t, V x, Rng& g) { return ops::maximum(x, t.constant(random_tensor(x.shape(), g))); }},
      {"minimum(c, x)", [](auto& t, V x, Rng& g) { return ops::minimum(t.constant(random_tensor(x.shape(), g)), x); }},
      {"maximum(x, 0.1)", [](auto&, V x, Rng&) { return ops::maximum(x, 0.1); }},
      {"minimum(x, -0.2)", [](auto&, V x, Rng&) { return ops::minimum(x, -0.2); }},
      {"sigmoid", [](auto&, V x, Rng&) { return ops::sigmoid(ops::scale(x, 3.0)); }},
      {"tanh", [](auto&, V x, Rng&) { return ops::tanh(ops::scale(x, 2.0)); }},
      {"log", [](auto&, V x, Rng&) { return ops::log(ops::add_scalar(ops::mul(x, x), 0.5)); }},
      {"exp", [](auto&, V x, Rng&) { return ops::exp(x); }},
      {"softmax", [](auto&, V x, Rng&) { return ops::softmax(ops::scale(x, 2.0)); }},
      {"log_softmax", [](auto&, V x, Rng&) { return ops::log_softmax(ops::scale(x, 2.0)); }},
      {"concat", [](auto& t, V x, Rng& g) { return ops::concat({t.constant(random_tensor({3, 2}, g)), x, x}); }},
      {"slice", [](auto&, V x, Rng&) { return ops::slice(x, 1, 3); }},
      {"sum", [](auto&, V x, Rng&) { return ops::sum(ops::mul(x, x)); }},
      {"mean", [](auto&, V x, Rng&) { return ops::mean(ops::mul(x, x)); }},
      {"row_sum", [](auto&, V x, Rng&) { return ops::row_sum(x); }},
      {"add_bias(c, x row)",
       [](auto& t, V x, Rng& g) { return ops::add_bias(t.constant(random_tensor({5, 4}, g)), ops::slice(ops::gather_rows(x, std::vector<int>{0}), 0, 4)); }},
      {"add_bias(x, c)", [](auto& t, V x, Rng& g) { return ops::add_bias(x, t.constant(random_tensor({1, 4}, g))); }},
      {"scale_rows(x, c)", [](auto& t, V x, Rng& g) { return ops::scale_rows(x, t.constant(random_tensor({3, 1}, g))); }},
      {"scale_rows(c, x col)",
       [](auto& t, V x, Rng& g) { return ops::scale_rows(t.constant(random_tensor({3, 6}, g)), ops::slice(x, 2, 3)); }},
      {"pick", [](auto&, V x, Rng&) { return ops::pick(x, std::vector<int>{3, 0, 2}); }},
      {"gather_rows", [](auto&, V x, Rng&) { return ops::gather_rows(x, std::vector<int>{2, 0, 2, 1}); }},
  };
  double worst = 0.0;
  std::string worst_name, failures;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& [name, op] = cases[i];
    auto make = [&, op = op](std::uint64_t s) {
      Rng rng(s);
      Tn x = random_tensor({3, 4}, rng);
      ScalarFn f = [op, s](Tape<double>& tape, V input) {
        Rng consts(s ^ 0x9e3779b97f4a7c15ULL);
        return weighted_sum(tape, op(tape, input, consts), s + 1);
      };
      return std::make_pair(f, x);
    };
    auto r = kink_free(make, seed + i);
    if (!r.found) failures += " " + name + "(no kink-free point)";
    if (r.error > worst) worst = r.error, worst_name = name;
  }
  const bool pass = failures.empty() && worst <= kGradTolerance;
  return {pass, std::to_string(cases.size()) + " ops, max rel err " + fmt(worst) + " (" + worst_name + ")" + failures};
}

Outcome stack_gradients(std::uint64_t seed) {
  // x packs, per step, B rows of [v (W) | pop | push | read] logits.
  constexpr std::size_t B = 2, W = 3, Steps = 4;
  auto forward = [](Tape<double>& tape, V x, bool read_only) {
    auto state = make_stack<double>(B, W);
    V out = tape.constant(Tn::scalar(0.0));
    for (std::size_t t = 0; t < Steps; ++t) {
      V row = ops::slice(x, t * (W + 3), (t + 1) * (W + 3));
      V v = ops::slice(row, 0, W);
      auto strength = [&](std::size_t k) { return ops::scale(ops::sigmoid(ops::slice(row, W + k, W + k + 1)), 2.0); };
      StackDirectives<double> dir{v, strength(0), strength(1), strength(2)};
      if (read_only) {
        state = stack_push(stack_pop(state, dir.pop), dir.value, dir.push);
        out = out + weighted_sum(tape, stack_read(tape, state, dir.read), 100 + t);
      } else {
        auto step = stack_step(tape, state, dir);
        state = step.state;
        out = out + weighted_sum(tape, step.read, 200 + t);
      }
    }
    return out + weighted_sum(tape, total_strength(tape, state), 300);
  };
  double worst = 0.0;
  std::string failures;
  for (bool read_only : {false, true}) {
    auto make = [&](std::uint64_t s) {
      Rng rng(s);
      Tn x = random_tensor({B, Steps * (W + 3)}, rng, -2.0, 2.0);
      ScalarFn f = [&forward, read_only](Tape<double>& tape, V input) { return forward(tape, input, read_only); };
      return std::make_pair(f, x);
    };
    auto r = kink_free(make, seed + read_only);
    if (!r.found) failures += read_only ? " stack_read(no kink-free point)" : " stack_step(no kink-free point)";
    worst = std::max(worst, r.error);
  }
  return {failures.empty() && worst <= kGradTolerance, "stack_step + stack_read max rel err " + fmt(worst) + failures};
}

namespace {

// The complete training loss of one batch with every parameter but one held
// fixed: REINFORCE surrogate with frozen rewards, entropy bonus, and the
// receiver/prior objective at beta = 0.5.
struct EndToEnd {
  MeaningSpace space = enumerate_attr_val(2, 3);
  AgentConfig config;
  std::vector<Meaning> batch;
  std::vector<std::vector<int>> messages;
  std::vector<double> rewards;
  Strategy strategy = Strategy::Learned;

  explicit EndToEnd(std::uint64_t seed, Strategy s) : strategy(s) {
    config.vocab = 4;
    config.max_len = 3;
    config.hidden = 8;
    config.embedding = 4;
    config.strategy = s;
    Rng rng(seed);
    for (int i = 0; i < 3; ++i) batch.push_back(space.meanings[rng.below(space.size())]);
    messages = {{1, 2, 3}, {2, 0}, {3, 1, 0}};
    for (int i = 0; i < 3; ++i) rewards.push_back(rng.uniform(-3.0, 0.0));
  }

  V loss(Tape<double>& tape, const Sender<double>& sender, const Receiver<double>& receiver, std::size_t which_sender,
         std::size_t which_receiver, V x, std::uint64_t branch_seed) const {
    auto bind = [&](const ParameterSet<double>& ps, std::size_t which) {
      std::vector<V> out;
      for (std::size_t i = 0; i < ps.size(); ++i) out.push_back(i == which ? x : tape.constant(ps.value(i)));
      return out;
    };
    auto sp = bind(sender.params(), which_sender);
    auto rp = bind(receiver.params(), which_receiver);
    auto out = sender.emit(tape, sp, sender.encode(tape, sp, batch), EmitMode::Forced, nullptr, messages);
    Rng branching(branch_seed);
    auto enc = receiver.encode(tape, rp, messages, strategy, &branching);
    V log_r = receiver.reconstruct(tape, rp, enc.final, batch);
    V log_p = receiver.message_log_prior(tape, rp, messages, enc.reads);
    V sender_loss = sender_surrogate(out.log_prob, rewards, -1.0, out.entropy, 0.5);
    return sender_loss - ops::mean(log_r + ops::scale(log_p, 0.5));
  }
};

}  // namespace

Outcome end_to_end_gradients(std::uint64_t seed) {
  double worst = 0.0;
  std::string failures;
  std::size_t coordinates = 0;
  for (Strategy strategy : {Strategy::Learned, Strategy::RandomBranching}) {
    const EndToEnd e2e(seed, strategy);
    std::size_t sender_count = 0, receiver_count = 0;
    {
      Rng init(seed);
      Sender<double> s(e2e.space, e2e.config, init);
      Receiver<double> r(e2e.space, e2e.config, init);
      sender_count = s.params().size();
      receiver_count = r.params().size();
    }
    for (std::size_t k = 0; k < sender_count + receiver_count; ++k) {
      const bool is_sender = k < sender_count;
      const std::size_t index = is_sender ? k : k - sender_count;
      std::string name;
      auto make = [&](std::uint64_t s) {
        Rng init(s);
        auto sender = std::make_shared<Sender<double>>(e2e.space, e2e.config, init);
        auto receiver = std::make_shared<Receiver<double>>(e2e.space, e2e.config, init);
        const auto& ps = is_sender ? sender->params() : receiver->params();
        name = ps.name(index);
        Tn x = ps.value(index);
        coordinates += x.size();
        const std::size_t ws = is_sender ? index : ps.size() + 1000, wr = is_sender ? 100000 : index;
        ScalarFn f = [&e2e, sender, receiver, ws, wr, s](Tape<double>& tape, V input) {
          return e2e.loss(tape, *sender, *receiver, ws, wr, input, s + 17);
        };
        return std::make_pair(f, x);
      };
      auto r = kink_free(make, seed + 31 * k);
      if (!r.found) failures += " " + name + "(no kink-free point)";
      if (r.error > kGradTolerance) failures += " " + name + "=" + fmt(r.error);
      worst = std::max(worst, r.error);
    }
  }
  return {failures.empty(), "learned + random strategies, " + std::to_string(coordinates) +
                                " coordinates, max rel err " + fmt(worst) + failures};
}

Outcome left_branching_collapse(int messages, std::uint64_t seed) {
  const auto space = enumerate_attr_val(2, 4);
  AgentConfig config;
  config.hidden = 16;
  config.embedding = 8;
  Rng init(seed), rng(seed + 1);
  Receiver<double> receiver(space, config, init);
  std::vector<std::vector<int>> batch;
  for (int i = 0; i < messages; ++i) {
    const int length = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(config.max_len)));
    std::vector<int> m;
    for (int t = 0; t < length; ++t) m.push_back(1 + static_cast<int>(rng.below(config.vocab - 1)));
    if (length < config.max_len) m.back() = kEos;
    batch.push_back(m);
  }
  Tape<double> tape(false);
  auto p = receiver.params().bind(tape, false);
  auto enc = receiver.encode(tape, p, batch, Strategy::LeftBranching, nullptr);
  double worst = 0.0;
  const std::size_t W = static_cast<std::size_t>(config.width());
  for (std::size_t b = 0; b < batch.size(); ++b)
    for (std::size_t t = 1; t <= batch[b].size(); ++t)
      for (std::size_t j = 0; j < W; ++j)
        worst = std::max(worst, std::abs(enc.reads[t].value()(b, j) - enc.values[t - 1].value()(b, j)));
  return {worst <= 1e-6, "max |r_t - v_t| = " + fmt(worst) + " over " + std::to_string(messages) + " messages"};
}

namespace {

// Exact-length Dyck strings from S -> '' | open_i S close_i S.
std::vector<std::vector<Meaning>> grammar_expand(int k, int l_max) {
  std::vector<std::vector<Meaning>> by_length(static_cast<std::size_t>(l_max) + 1);
  by_length[0].push_back({});
  for (int n = 2; n <= l_max; n += 2)
    for (int a = 0; a <= n - 2; a += 2)
      for (const auto& inner : by_length[static_cast<std::size_t>(a)])
        for (const auto& rest : by_length[static_cast<std::size_t>(n - 2 - a)])
          for (int i = 0; i < k; ++i) {
            Meaning m{i};
            m.insert(m.end(), inner.begin(), inner.end());
            m.push_back(k + i);
            m.insert(m.end(), rest.begin(), rest.end());
            by_length[static_cast<std::size_t>(n)].push_back(std::move(m));
          }
  return by_length;
}

}  // namespace

Outcome dyck_counts() {
  struct Case {
    int k, l_max;
    std::uint64_t expected;
  };
  bool pass = true;
  std::ostringstream o;
  for (auto [k, l_max, expected] : {Case{1, 18, 6918}, Case{4, 8, 3941}, Case{9, 6, 3817}}) {
    const auto space = enumerate_dyck(k, l_max);
    std::set<Meaning> grammar;
    for (const auto& group : grammar_expand(k, l_max)) grammar.insert(group.begin(), group.end());
    const std::set<Meaning> enumerated(space.meanings.begin(), space.meanings.end());
    const bool ok = space.size() == expected && dyck_count(k, l_max) == expected && grammar.size() == expected &&
                    enumerated == grammar;
    pass = pass && ok;
    o << "(" << k << "," << l_max << ")=" << space.size() << "/" << dyck_count(k, l_max) << "/" << grammar.size() << " ";
  }
  for (auto [n_att, n_val] : {std::pair{2, 64}, {3, 16}, {4, 8}, {6, 4}}) {
    const auto n = enumerate_attr_val(n_att, n_val).size();
    pass = pass && n == 4096;
    o << n_att << "x" << n_val << "=" << n << " ";
  }
  return {pass, o.str()};
}

Outcome reinforce_unbiased(std::uint64_t seed) {
  const auto space = enumerate_attr_val(2, 3);
  AgentConfig config;
  config.vocab = 3;  // EOS plus two content symbols
  config.max_len = 2;
  config.hidden = 8;
  config.embedding = 4;
  Rng init(seed), rng(seed + 1);
  Sender<double> sender(space, config, init);
  const std::vector<std::vector<int>> all = {{0}, {1, 0}, {2, 0}, {1, 1}, {1, 2}, {2, 1}, {2, 2}};
  const std::size_t n = all.size();
  const std::vector<Meaning> batch(n, space.meanings[rng.below(space.size())]);
  std::vector<double> reward(n);
  for (auto& g : reward) g = rng.uniform(-3.0, 0.0);
  const double baseline = rng.uniform(-2.0, -1.0);

  // Exact: gradient of sum_m S(m) G(m).
  Tape<double> exact_tape(false);
  auto ep = sender.params().bind(exact_tape);
  V log_s = sender.score(exact_tape, ep, sender.encode(exact_tape, ep, batch), all);
  Tn g(Shape{n, 1});
  for (std::size_t i = 0; i < n; ++i) g[i] = reward[i];
  exact_tape.backward(ops::sum(ops::exp(log_s) * exact_tape.constant(g)));
  double mass = 0.0;
  std::vector<double> prob(n);
  for (std::size_t i = 0; i < n; ++i) mass += prob[i] = std::exp(log_s.value()[i]);

  // Estimator: the training surrogate, each message weighted by its exact probability.
  Tape<double> est_tape(false);
  auto sp = sender.params().bind(est_tape);
  auto out = sender.emit(est_tape, sp, sender.encode(est_tape, sp, batch), EmitMode::Forced, nullptr, all);
  std::vector<double> weighted(n);
  for (std::size_t i = 0; i < n; ++i) weighted[i] = static_cast<double>(n) * prob[i] * (reward[i] - baseline) + baseline;
  est_tape.backward(-sender_surrogate(out.log_prob, weighted, baseline, out.entropy, 0.0));

  double worst = 0.0;
  for (std::size_t i = 0; i < ep.size(); ++i) {
    const Tn a = exact_tape.grad(ep[i]), b = est_tape.grad(sp[i]);
    for (std::size_t j = 0; j < a.size(); ++j) worst = std::max(worst, std::abs(a[j] - b[j]));
  }
  const bool pass = worst <= 1e-6 && std::abs(mass - 1.0) <= 1e-12;
  return {pass, "max |E[REINFORCE] - grad J| = " + fmt(worst) + ", total message mass " + fmt(mass)};
}

}  // namespace eclab::checks
