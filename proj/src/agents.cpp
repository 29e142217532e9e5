#include "eclab/agents.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "eclab/ops.hpp"

namespace eclab {
namespace {

template <typename T>
Tensor<T> uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& x : t.data()) x = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
Var<T> repeat_row(Tape<T>& tape, Var<T> row, std::size_t batch) {
  (void)tape;
  std::vector<int> zeros(batch, 0);
  return ops::gather_rows(row, std::span<const int>(zeros));
}

template <typename T>
Var<T> mask_column(Tape<T>& tape, const std::vector<char>& active) {
  Tensor<T> m = Tensor<T>::matrix(active.size(), 1);
  for (std::size_t i = 0; i < active.size(); ++i) m[i] = active[i] ? T{1} : T{0};
  return tape.constant(std::move(m));
}

template <typename T>
Var<T> blend(Tape<T>& tape, Var<T> fresh, Var<T> old, const std::vector<char>& active) {
  std::vector<char> inactive(active.size());
  for (std::size_t i = 0; i < active.size(); ++i) inactive[i] = !active[i];
  return ops::scale_rows(fresh, mask_column(tape, active)) + ops::scale_rows(old, mask_column(tape, inactive));
}

bool all_of(const std::vector<char>& v) {
  return std::all_of(v.begin(), v.end(), [](char c) { return c != 0; });
}
bool any_of(const std::vector<char>& v) {
  return std::any_of(v.begin(), v.end(), [](char c) { return c != 0; });
}

template <typename T>
int argmax_row(const Tensor<T>& t, std::size_t row, std::size_t begin, std::size_t end) {
  std::size_t best = begin;
  for (std::size_t c = begin + 1; c < end; ++c)
    if (t(row, c) > t(row, best)) best = c;
  return static_cast<int>(best - begin);
}

void validate_messages(std::span<const std::vector<int>> messages, const AgentConfig& config, const char* op) {
  for (const auto& m : messages) {
    if (m.empty() || static_cast<int>(m.size()) > config.max_len) {
      throw Error(std::string(op) + ": message length " + std::to_string(m.size()) + " outside [1, " +
                  std::to_string(config.max_len) + "]");
    }
    for (std::size_t t = 0; t < m.size(); ++t) {
      if (m[t] < 0 || m[t] >= config.vocab) throw Error(std::string(op) + ": symbol " + std::to_string(m[t]) + " out of range");
      if (m[t] == kEos && t + 1 != m.size()) throw Error(std::string(op) + ": EOS before the end of a message");
    }
  }
}

}  // namespace

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Learned: return "learned";
    case Strategy::LeftBranching: return "left";
    case Strategy::RandomBranching: return "random";
  }
  return "?";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "learned") return Strategy::Learned;
  if (name == "left") return Strategy::LeftBranching;
  if (name == "random") return Strategy::RandomBranching;
  throw Error("unknown strategy '" + name + "' (expected learned, left or random)");
}

std::string to_string(RandomResample r) { return r == RandomResample::PerStep ? "per_step" : "per_message"; }

RandomResample parse_random_resample(const std::string& name) {
  if (name == "per_step") return RandomResample::PerStep;
  if (name == "per_message") return RandomResample::PerMessage;
  throw Error("unknown random_resample '" + name + "' (expected per_step or per_message)");
}

// --- LSTM ------------------------------------------------------------------

template <typename T>
LstmCell<T> LstmCell<T>::create(ParameterSet<T>& params, const std::string& name, int input, int hidden, Rng& rng) {
  LstmCell cell;
  cell.input = input;
  cell.hidden = hidden;
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  const auto rows = static_cast<std::size_t>(input + hidden), gates = static_cast<std::size_t>(4 * hidden);
  cell.weight = params.add(name + ".weight", uniform_tensor<T>({rows, gates}, bound, rng));
  cell.bias = params.add(name + ".bias", uniform_tensor<T>({1, gates}, bound, rng));
  return cell;
}

template <typename T>
LstmState<T> LstmCell<T>::step(std::span<const Var<T>> p, Var<T> x, const LstmState<T>& state) const {
  const auto H = static_cast<std::size_t>(hidden);
  Var<T> z = ops::add_bias(ops::matmul(ops::concat<T>({x, state.h}), p[weight]), p[bias]);
  Var<T> i = ops::sigmoid(ops::slice(z, 0, H));
  Var<T> f = ops::sigmoid(ops::slice(z, H, 2 * H));
  Var<T> g = ops::tanh(ops::slice(z, 2 * H, 3 * H));
  Var<T> o = ops::sigmoid(ops::slice(z, 3 * H, 4 * H));
  Var<T> c = f * state.c + i * g;
  return {o * ops::tanh(c), c};
}

// --- Sender ----------------------------------------------------------------

template <typename T>
Sender<T>::Sender(const MeaningSpace& space, const AgentConfig& config, Rng& init)
    : shape_(MeaningShape::of(space)), config_(config) {
  const auto H = static_cast<std::size_t>(config.hidden), E = static_cast<std::size_t>(config.embedding);
  const double hb = 1.0 / std::sqrt(static_cast<double>(H));
  const double unit = std::sqrt(3.0);  // unit-variance uniform for embeddings
  if (shape_.kind == MeaningKind::AttrVal) {
    const std::size_t in = space.one_hot_width();
    const double b = 1.0 / std::sqrt(static_cast<double>(in));
    init_map_ = params_.add("sender.init.weight", uniform_tensor<T>({in, 2 * H}, b, init));
    init_bias_ = params_.add("sender.init.bias", uniform_tensor<T>({1, 2 * H}, b, init));
  } else {
    token_embedding_ = params_.add("sender.meaning.embedding",
                                   uniform_tensor<T>({static_cast<std::size_t>(space.token_count()), E}, unit, init));
    init_h_ = params_.add("sender.meaning.h0", uniform_tensor<T>({1, H}, hb, init));
    init_c_ = params_.add("sender.meaning.c0", uniform_tensor<T>({1, H}, hb, init));
    meaning_lstm_ = LstmCell<T>::create(params_, "sender.meaning.lstm", config.embedding, config.hidden, init);
  }
  start_ = params_.add("sender.start", uniform_tensor<T>({1, E}, unit, init));
  symbol_embedding_ =
      params_.add("sender.symbol.embedding", uniform_tensor<T>({static_cast<std::size_t>(config.vocab), E}, unit, init));
  message_lstm_ = LstmCell<T>::create(params_, "sender.message.lstm", config.embedding, config.hidden, init);
  out_weight_ = params_.add("sender.out.weight", uniform_tensor<T>({H, static_cast<std::size_t>(config.vocab)}, hb, init));
  out_bias_ = params_.add("sender.out.bias", uniform_tensor<T>({1, static_cast<std::size_t>(config.vocab)}, hb, init));
}

template <typename T>
LstmState<T> Sender<T>::encode(Tape<T>& tape, std::span<const Var<T>> p, std::span<const Meaning> meanings) const {
  const std::size_t B = meanings.size();
  const auto H = static_cast<std::size_t>(config_.hidden);
  if (shape_.kind == MeaningKind::AttrVal) {
    Tensor<T> x = Tensor<T>::matrix(B, static_cast<std::size_t>(shape_.n_att) * shape_.n_val);
    for (std::size_t b = 0; b < B; ++b) {
      const auto& m = meanings[b];
      if (static_cast<int>(m.size()) != shape_.n_att) throw Error("sender_encode: meaning has the wrong number of attributes");
      for (int a = 0; a < shape_.n_att; ++a) {
        if (m[a] < 0 || m[a] >= shape_.n_val) throw Error("sender_encode: attribute value out of range");
        x(b, static_cast<std::size_t>(a) * shape_.n_val + m[a]) = T{1};
      }
    }
    Var<T> z = ops::add_bias(ops::matmul(tape.constant(std::move(x)), p[init_map_]), p[init_bias_]);
    return {ops::slice(z, 0, H), ops::slice(z, H, 2 * H)};
  }

  std::size_t longest = 0;
  for (const auto& m : meanings) {
    if (static_cast<int>(m.size()) > shape_.l_max || !is_dyck(m, shape_.k)) {
      throw Error("sender_encode: meaning is not a Dyck string of length <= " + std::to_string(shape_.l_max));
    }
    longest = std::max(longest, m.size());
  }
  LstmState<T> state{repeat_row(tape, p[init_h_], B), repeat_row(tape, p[init_c_], B)};
  for (std::size_t t = 0; t < longest; ++t) {
    std::vector<int> tokens(B, 0);
    std::vector<char> active(B, 0);
    for (std::size_t b = 0; b < B; ++b) {
      if (t < meanings[b].size()) {
        tokens[b] = meanings[b][t];
        active[b] = 1;
      }
    }
    Var<T> x = ops::gather_rows(p[token_embedding_], std::span<const int>(tokens));
    LstmState<T> next = meaning_lstm_.step(p, x, state);
    if (all_of(active)) {
      state = next;
    } else {
      state = {blend(tape, next.h, state.h, active), blend(tape, next.c, state.c, active)};
    }
  }
  return state;
}

template <typename T>
SenderOutput<T> Sender<T>::emit(Tape<T>& tape, std::span<const Var<T>> p, const LstmState<T>& initial, EmitMode mode,
                                Rng* rng, std::span<const std::vector<int>> forced) const {
  const std::size_t B = initial.h.rows();
  const auto V = static_cast<std::size_t>(config_.vocab);
  if (mode == EmitMode::Sample && rng == nullptr) throw Error("sender_emit: sample mode needs an rng");
  if (mode == EmitMode::Forced) {
    if (forced.size() != B) throw Error("sender_score: " + std::to_string(forced.size()) + " messages for batch " + std::to_string(B));
    validate_messages(forced, config_, "sender_score");
  }

  SenderOutput<T> out;
  out.messages.resize(B);
  out.log_prob = tape.constant(Tensor<T>::matrix(B, 1));
  out.entropy = tape.constant(Tensor<T>::matrix(B, 1));
  std::vector<char> active(B, 1);
  LstmState<T> state = initial;
  Var<T> x = repeat_row(tape, p[start_], B);

  for (int t = 0; t < config_.max_len && any_of(active); ++t) {
    state = message_lstm_.step(p, x, state);
    Var<T> log_probs = ops::log_softmax(ops::add_bias(ops::matmul(state.h, p[out_weight_]), p[out_bias_]));
    const Tensor<T>& lp = log_probs.value();

    std::vector<int> symbols(B, kEos);
    for (std::size_t b = 0; b < B; ++b) {
      if (!active[b]) continue;
      switch (mode) {
        case EmitMode::Greedy: symbols[b] = argmax_row(lp, b, 0, V); break;
        case EmitMode::Forced: symbols[b] = forced[b][static_cast<std::size_t>(t)]; break;
        case EmitMode::Sample: {
          double u = rng->uniform(), acc = 0.0;
          int chosen = static_cast<int>(V) - 1;
          for (std::size_t v = 0; v < V; ++v) {
            acc += std::exp(static_cast<double>(lp(b, v)));
            if (u < acc) {
              chosen = static_cast<int>(v);
              break;
            }
          }
          symbols[b] = chosen;
          break;
        }
      }
    }

    Var<T> act = mask_column(tape, active);
    Var<T> step_lp = ops::pick(log_probs, std::span<const int>(symbols));
    Var<T> step_entropy = -ops::row_sum(ops::exp(log_probs) * log_probs);
    out.log_prob = out.log_prob + step_lp * act;
    out.entropy = out.entropy + step_entropy * act;

    for (std::size_t b = 0; b < B; ++b) {
      if (!active[b]) continue;
      auto& m = out.messages[b];
      m.symbols.push_back(symbols[b]);
      m.step_log_probs.push_back(static_cast<double>(step_lp.value()[b]));
      const bool done = mode == EmitMode::Forced ? static_cast<std::size_t>(t) + 1 >= forced[b].size()
                                                 : symbols[b] == kEos;
      if (done) active[b] = 0;
    }
    x = ops::gather_rows(p[symbol_embedding_], std::span<const int>(symbols));
  }

  for (std::size_t b = 0; b < B; ++b) {
    out.messages[b].log_prob = static_cast<double>(out.log_prob.value()[b]);
    out.messages[b].entropy = static_cast<double>(out.entropy.value()[b]);
  }
  return out;
}

template <typename T>
Var<T> Sender<T>::score(Tape<T>& tape, std::span<const Var<T>> p, const LstmState<T>& state,
                        std::span<const std::vector<int>> messages) const {
  return emit(tape, p, state, EmitMode::Forced, nullptr, messages).log_prob;
}

// --- Directives ------------------------------------------------------------

template <typename T>
Tensor<T> draw_random_strengths(std::size_t batch, Rng& rng, const StackCaps& caps) {
  Tensor<T> draws = Tensor<T>::matrix(batch, 3);
  for (std::size_t b = 0; b < batch; ++b) {
    draws(b, 0) = static_cast<T>(rng.uniform(0.0, caps.pop));
    draws(b, 1) = static_cast<T>(rng.uniform(0.0, caps.push));
    draws(b, 2) = static_cast<T>(rng.uniform(0.0, caps.read));
  }
  return draws;
}

template <typename T>
StackDirectives<T> make_directives(Tape<T>& tape, const DirectiveHead<T>& head, Strategy strategy, Var<T> hidden,
                                   Rng* rng, const StackCaps& caps, const Tensor<T>* fixed_draws) {
  const std::size_t B = hidden.rows();
  StackDirectives<T> d;
  d.value = ops::tanh(ops::add_bias(ops::matmul(hidden, head.value_weight), head.value_bias));
  switch (strategy) {
    case Strategy::Learned: {
      Var<T> s = ops::sigmoid(ops::add_bias(ops::matmul(hidden, head.strength_weight), head.strength_bias));
      d.pop = ops::scale(ops::slice(s, 0, 1), static_cast<T>(caps.pop));
      d.push = ops::scale(ops::slice(s, 1, 2), static_cast<T>(caps.push));
      d.read = ops::scale(ops::slice(s, 2, 3), static_cast<T>(caps.read));
      break;
    }
    case Strategy::LeftBranching: {
      Var<T> one = tape.constant(Tensor<T>::matrix(B, 1, T{1}));
      d.pop = d.push = d.read = one;
      break;
    }
    case Strategy::RandomBranching: {
      Tensor<T> draws;
      if (fixed_draws) {
        draws = *fixed_draws;
      } else {
        if (!rng) throw Error("make_directives: random branching needs an rng");
        draws = draw_random_strengths<T>(B, *rng, caps);
      }
      Tensor<T> u = Tensor<T>::matrix(B, 1), dd = Tensor<T>::matrix(B, 1), r = Tensor<T>::matrix(B, 1);
      for (std::size_t b = 0; b < B; ++b) {
        u[b] = draws(b, 0);
        dd[b] = draws(b, 1);
        r[b] = draws(b, 2);
      }
      d.pop = tape.constant(std::move(u));
      d.push = tape.constant(std::move(dd));
      d.read = tape.constant(std::move(r));
      break;
    }
  }
  return d;
}

// --- Receiver --------------------------------------------------------------

template <typename T>
Receiver<T>::Receiver(const MeaningSpace& space, const AgentConfig& config, Rng& init)
    : shape_(MeaningShape::of(space)), config_(config) {
  const auto H = static_cast<std::size_t>(config.hidden), E = static_cast<std::size_t>(config.embedding);
  const auto W = static_cast<std::size_t>(config.width());
  const auto V = static_cast<std::size_t>(config.vocab);
  const double hb = 1.0 / std::sqrt(static_cast<double>(H));
  const double wb = 1.0 / std::sqrt(static_cast<double>(W));
  const double unit = std::sqrt(3.0);

  symbol_embedding_ = params_.add("receiver.symbol.embedding", uniform_tensor<T>({V, E}, unit, init));
  controller_ = LstmCell<T>::create(params_, "receiver.controller", config.embedding + config.width(), config.hidden, init);
  value_weight_ = params_.add("receiver.push_value.weight", uniform_tensor<T>({H, W}, hb, init));
  value_bias_ = params_.add("receiver.push_value.bias", uniform_tensor<T>({1, W}, hb, init));
  strength_weight_ = params_.add("receiver.strengths.weight", uniform_tensor<T>({H, 3}, hb, init));
  strength_bias_ = params_.add("receiver.strengths.bias", uniform_tensor<T>({1, 3}, hb, init));

  if (shape_.kind == MeaningKind::AttrVal) {
    const std::size_t out = static_cast<std::size_t>(shape_.n_att) * shape_.n_val;
    head_weight_ = params_.add("receiver.heads.weight", uniform_tensor<T>({H, out}, hb, init));
    head_bias_ = params_.add("receiver.heads.bias", uniform_tensor<T>({1, out}, hb, init));
  } else {
    const auto tokens = static_cast<std::size_t>(2 * shape_.k);
    decoder_start_ = params_.add("receiver.decoder.start", uniform_tensor<T>({1, E}, unit, init));
    decoder_embedding_ = params_.add("receiver.decoder.embedding", uniform_tensor<T>({tokens, E}, unit, init));
    decoder_ = LstmCell<T>::create(params_, "receiver.decoder.lstm", config.embedding, config.hidden, init);
    decoder_out_weight_ = params_.add("receiver.decoder.out.weight", uniform_tensor<T>({H, tokens + 1}, hb, init));
    decoder_out_bias_ = params_.add("receiver.decoder.out.bias", uniform_tensor<T>({1, tokens + 1}, hb, init));
  }
  if (config.prior_head) {
    prior_weight_ = params_.add("receiver.prior.weight", uniform_tensor<T>({W, V}, wb, init));
    prior_bias_ = params_.add("receiver.prior.bias", uniform_tensor<T>({1, V}, wb, init));
  }
}

template <typename T>
ReceiverEncoding<T> Receiver<T>::encode(Tape<T>& tape, std::span<const Var<T>> p,
                                        std::span<const std::vector<int>> messages, Strategy strategy, Rng* rng) const {
  validate_messages(messages, config_, "receiver_encode");
  const std::size_t B = messages.size();
  const auto H = static_cast<std::size_t>(config_.hidden), W = static_cast<std::size_t>(config_.width());
  const DirectiveHead<T> head{p[value_weight_], p[value_bias_], p[strength_weight_], p[strength_bias_]};

  ReceiverEncoding<T> enc;
  std::size_t longest = 0;
  for (const auto& m : messages) {
    enc.lengths.push_back(m.size());
    longest = std::max(longest, m.size());
  }
  LstmState<T> state{tape.constant(Tensor<T>::matrix(B, H)), tape.constant(Tensor<T>::matrix(B, H))};
  Var<T> read = tape.constant(Tensor<T>::matrix(B, W));
  enc.reads.push_back(read);
  StackState<T> stack = make_stack<T>(B, W);

  std::optional<Tensor<T>> per_message;
  if (strategy == Strategy::RandomBranching && config_.resample == RandomResample::PerMessage) {
    if (!rng) throw Error("receiver_encode: random branching needs an rng");
    per_message = draw_random_strengths<T>(B, *rng, config_.caps);
  }

  for (std::size_t t = 0; t < longest; ++t) {
    std::vector<int> symbols(B, kEos);
    std::vector<char> active(B, 0);
    for (std::size_t b = 0; b < B; ++b) {
      if (t < messages[b].size()) {
        symbols[b] = messages[b][t];
        active[b] = 1;
      }
    }
    Var<T> x = ops::gather_rows(p[symbol_embedding_], std::span<const int>(symbols));
    LstmState<T> next = controller_.step(p, ops::concat<T>({x, read}), state);
    StackDirectives<T> dir =
        make_directives(tape, head, strategy, next.h, rng, config_.caps, per_message ? &*per_message : nullptr);
    enc.directives.push_back(ops::concat<T>({dir.pop, dir.push, dir.read}).value());
    enc.values.push_back(dir.value);
    const bool full = all_of(active);
    if (!full) {
      // Finished rows get u = d = 0, which leaves their stack untouched.
      Var<T> act = mask_column(tape, active);
      dir.pop = dir.pop * act;
      dir.push = dir.push * act;
    }
    auto stepped = stack_step(tape, stack, dir);
    stack = std::move(stepped.state);
    read = stepped.read;
    enc.reads.push_back(read);
    state = full ? next : LstmState<T>{blend(tape, next.h, state.h, active), blend(tape, next.c, state.c, active)};
  }
  enc.final = state;
  return enc;
}

template <typename T>
Var<T> Receiver<T>::reconstruct(Tape<T>& tape, std::span<const Var<T>> p, const LstmState<T>& final,
                                std::span<const Meaning> meanings) const {
  const std::size_t B = meanings.size();
  if (final.h.rows() != B) throw Error("receiver_reconstruct: batch size mismatch");
  if (shape_.kind == MeaningKind::AttrVal) {
    const auto nv = static_cast<std::size_t>(shape_.n_val);
    Var<T> logits = ops::add_bias(ops::matmul(final.h, p[head_weight_]), p[head_bias_]);
    std::optional<Var<T>> total;
    for (int a = 0; a < shape_.n_att; ++a) {
      std::vector<int> values(B);
      for (std::size_t b = 0; b < B; ++b) values[b] = meanings[b].at(static_cast<std::size_t>(a));
      Var<T> lp = ops::pick(ops::log_softmax(ops::slice(logits, a * nv, (a + 1) * nv)), std::span<const int>(values));
      total = total ? *total + lp : lp;
    }
    return *total;
  }

  const int end_token = 2 * shape_.k;
  std::size_t longest = 0;
  for (const auto& m : meanings) longest = std::max(longest, m.size());
  Var<T> total = tape.constant(Tensor<T>::matrix(B, 1));
  LstmState<T> state = final;
  Var<T> x = repeat_row(tape, p[decoder_start_], B);
  for (std::size_t t = 0; t <= longest; ++t) {
    state = decoder_.step(p, x, state);
    Var<T> lp = ops::log_softmax(ops::add_bias(ops::matmul(state.h, p[decoder_out_weight_]), p[decoder_out_bias_]));
    std::vector<int> targets(B, end_token), inputs(B, 0);
    std::vector<char> active(B, 0);
    for (std::size_t b = 0; b < B; ++b) {
      const auto& m = meanings[b];
      if (t <= m.size()) active[b] = 1;
      if (t < m.size()) targets[b] = inputs[b] = m[t];
    }
    total = total + ops::pick(lp, std::span<const int>(targets)) * mask_column(tape, active);
    if (t < longest) x = ops::gather_rows(p[decoder_embedding_], std::span<const int>(inputs));
  }
  return total;
}

template <typename T>
std::vector<Meaning> Receiver<T>::decode(Tape<T>& tape, std::span<const Var<T>> p, const LstmState<T>& final) const {
  const std::size_t B = final.h.rows();
  std::vector<Meaning> out(B);
  if (shape_.kind == MeaningKind::AttrVal) {
    const auto nv = static_cast<std::size_t>(shape_.n_val);
    const Tensor<T> logits = ops::add_bias(ops::matmul(final.h, p[head_weight_]), p[head_bias_]).value();
    for (std::size_t b = 0; b < B; ++b)
      for (int a = 0; a < shape_.n_att; ++a) out[b].push_back(argmax_row(logits, b, a * nv, (a + 1) * nv));
    return out;
  }

  const int end_token = 2 * shape_.k;
  const auto width = static_cast<std::size_t>(end_token + 1);
  std::vector<char> active(B, 1);
  LstmState<T> state = final;
  Var<T> x = repeat_row(tape, p[decoder_start_], B);
  for (int t = 0; t <= shape_.l_max && any_of(active); ++t) {
    state = decoder_.step(p, x, state);
    const Tensor<T> logits = ops::add_bias(ops::matmul(state.h, p[decoder_out_weight_]), p[decoder_out_bias_]).value();
    std::vector<int> inputs(B, 0);
    for (std::size_t b = 0; b < B; ++b) {
      if (!active[b]) continue;
      const int token = argmax_row(logits, b, 0, width);
      if (token == end_token) {
        active[b] = 0;
      } else {
        out[b].push_back(token);
        inputs[b] = token;
      }
    }
    x = ops::gather_rows(p[decoder_embedding_], std::span<const int>(inputs));
  }
  return out;
}

template <typename T>
Var<T> Receiver<T>::prior_step(std::span<const Var<T>> p, Var<T> previous_read) const {
  if (!config_.prior_head) throw Error("prior_step: receiver was built without a prior head");
  return ops::log_softmax(ops::add_bias(ops::matmul(previous_read, p[prior_weight_]), p[prior_bias_]));
}

template <typename T>
Var<T> Receiver<T>::message_log_prior(Tape<T>& tape, std::span<const Var<T>> p,
                                      std::span<const std::vector<int>> messages, std::span<const Var<T>> reads) const {
  if (!config_.prior_head) throw Error("message_log_prior: receiver was built without a prior head");
  const std::size_t B = messages.size();
  std::size_t longest = 0;
  for (const auto& m : messages) longest = std::max(longest, m.size());
  if (reads.size() != longest + 1) {
    throw Error("message_log_prior: " + std::to_string(reads.size()) + " read vectors for messages of length " +
                std::to_string(longest));
  }
  Var<T> total = tape.constant(Tensor<T>::matrix(B, 1));
  for (std::size_t t = 0; t < longest; ++t) {
    std::vector<int> symbols(B, kEos);
    std::vector<char> active(B, 0);
    for (std::size_t b = 0; b < B; ++b) {
      if (t < messages[b].size()) {
        symbols[b] = messages[b][t];
        active[b] = 1;
      }
    }
    Var<T> lp = ops::pick(prior_step(p, reads[t]), std::span<const int>(symbols));
    total = total + (all_of(active) ? lp : lp * mask_column(tape, active));
  }
  return total;
}

template struct LstmCell<float>;
template struct LstmCell<double>;
template class Sender<float>;
template class Sender<double>;
template class Receiver<float>;
template class Receiver<double>;
template Tensor<float> draw_random_strengths<float>(std::size_t, Rng&, const StackCaps&);
template Tensor<double> draw_random_strengths<double>(std::size_t, Rng&, const StackCaps&);
template StackDirectives<float> make_directives<float>(Tape<float>&, const DirectiveHead<float>&, Strategy, Var<float>,
                                                       Rng*, const StackCaps&, const Tensor<float>*);
template StackDirectives<double> make_directives<double>(Tape<double>&, const DirectiveHead<double>&, Strategy,
                                                         Var<double>, Rng*, const StackCaps&, const Tensor<double>*);

}  // namespace eclab
