#include "eclab/metrics.hpp"

#include <algorithm>

namespace eclab {
namespace {

template <typename T>
std::vector<std::vector<int>> greedy_messages(const Sender<T>& sender, Tape<T>& tape, const std::vector<Var<T>>& sp,
                                              std::span<const Meaning> chunk) {
  auto state = sender.encode(tape, sp, chunk);
  auto out = sender.emit(tape, sp, state, EmitMode::Greedy);
  std::vector<std::vector<int>> messages;
  messages.reserve(chunk.size());
  for (auto& m : out.messages) messages.push_back(std::move(m.symbols));
  return messages;
}

}  // namespace

template <typename T>
double comacc(const Sender<T>& sender, const Receiver<T>& receiver, std::span<const Meaning> meanings,
              Strategy strategy, Rng& eval_rng, int draws) {
  if (meanings.empty()) throw Error("comacc: no meanings to evaluate");
  if (draws < 1) throw Error("comacc: draws must be >= 1");
  const int rounds = strategy == Strategy::RandomBranching ? draws : 1;
  std::size_t hits = 0;
  for (std::size_t begin = 0; begin < meanings.size(); begin += kEvalChunk) {
    auto chunk = meanings.subspan(begin, std::min(kEvalChunk, meanings.size() - begin));
    Tape<T> tape(false);
    auto sp = sender.params().bind(tape, false);
    auto rp = receiver.params().bind(tape, false);
    auto messages = greedy_messages(sender, tape, sp, chunk);
    for (int d = 0; d < rounds; ++d) {
      auto enc = receiver.encode(tape, rp, messages, strategy, &eval_rng);
      auto decoded = receiver.decode(tape, rp, enc.final);
      for (std::size_t i = 0; i < chunk.size(); ++i) hits += decoded[i] == chunk[i] ? 1 : 0;
    }
  }
  return static_cast<double>(hits) / (static_cast<double>(meanings.size()) * rounds);
}

template <typename T>
double mean_log_prior(const Sender<T>& sender, const Receiver<T>& receiver, std::span<const Meaning> meanings,
                      Strategy strategy, Rng& eval_rng) {
  if (!receiver.has_prior()) throw Error("mean_log_prior: receiver has no prior head");
  if (meanings.empty()) throw Error("mean_log_prior: no meanings to evaluate");
  double total = 0.0;
  for (std::size_t begin = 0; begin < meanings.size(); begin += kEvalChunk) {
    auto chunk = meanings.subspan(begin, std::min(kEvalChunk, meanings.size() - begin));
    Tape<T> tape(false);
    auto sp = sender.params().bind(tape, false);
    auto rp = receiver.params().bind(tape, false);
    auto messages = greedy_messages(sender, tape, sp, chunk);
    auto enc = receiver.encode(tape, rp, messages, strategy, &eval_rng);
    auto lp = receiver.message_log_prior(tape, rp, messages, enc.reads);
    for (std::size_t i = 0; i < chunk.size(); ++i) total += static_cast<double>(lp.value()[i]);
  }
  return total / static_cast<double>(meanings.size());
}

template double comacc<float>(const Sender<float>&, const Receiver<float>&, std::span<const Meaning>, Strategy, Rng&, int);
template double comacc<double>(const Sender<double>&, const Receiver<double>&, std::span<const Meaning>, Strategy, Rng&,
                               int);
template double mean_log_prior<float>(const Sender<float>&, const Receiver<float>&, std::span<const Meaning>, Strategy,
                                      Rng&);
template double mean_log_prior<double>(const Sender<double>&, const Receiver<double>&, std::span<const Meaning>,
                                       Strategy, Rng&);

}  // namespace eclab
