#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <thread>

#include "batchinfer/model.hpp"
#include "batchinfer/pipeline.hpp"
#include "batchinfer/timeout_retry.hpp"

using namespace batchinfer;
using namespace std::chrono_literals;

namespace {

PredictorNode node(std::string id, std::vector<std::string> inputs = {}) {
  PredictorNode n;
  n.id = std::move(id);
  n.inputs = std::move(inputs);
  return n;
}

std::vector<Item> items(RecordId from, RecordId to) {
  std::vector<Item> out;
  for (RecordId r = from; r < to; ++r) out.push_back({r, 0, {}, "p" + std::to_string(r)});
  return out;
}

std::string describe(const ItemResult& r) {
  std::string s = r.error ? "E" : "";
  for (const auto& o : r.outputs) {
    s += "[" + std::to_string(o.lineage.back()) + ":" + o.payload + "]";
  }
  return s;
}

PipelineSpec valid_spec() {
  PipelineSpec p;
  p.nodes = {node("a")};
  return p;
}

}  // namespace

// ---- graph ------------------------------------------------------------------

TEST(Dag, ChainOrderRootsAndSink) {
  const Dag d({node("classify", {"detect"}), node("detect")});
  EXPECT_EQ(d.order(), (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(d.roots(), (std::vector<std::size_t>{1}));
  EXPECT_EQ(d.sink(), 0u);
  EXPECT_TRUE(d.is_sink(0));
  EXPECT_EQ(d.successors(1), (std::vector<std::size_t>{0}));
  EXPECT_EQ(d.predecessors(0), (std::vector<std::size_t>{1}));
}

TEST(Dag, DiamondKeepsDeclarationOrderForTies) {
  const Dag d({node("a"), node("c", {"a"}), node("b", {"a"}), node("d", {"b", "c", "b"})});
  EXPECT_EQ(d.order(), (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(d.predecessors(3).size(), 2u);
  EXPECT_EQ(d.sink(), 3u);
}

TEST(Dag, RejectsBadGraphs) {
  EXPECT_THROW(Dag({node("a"), node("a")}), ConfigurationError);
  EXPECT_THROW(Dag({node("a", {"zz"})}), ConfigurationError);
  EXPECT_THROW(Dag({node("a", {"b"}), node("b", {"a"})}), ConfigurationError);
  EXPECT_THROW(Dag({node("a"), node("b")}), ConfigurationError);  // two sinks
  EXPECT_THROW(Dag({node("a"), node("b", {"a"}), node("c", {"a"})}), ConfigurationError);
}

TEST(PipelineSpec, Validation) {
  EXPECT_NO_THROW(valid_spec().validate());
  auto p = valid_spec();
  p.nodes.clear();
  EXPECT_THROW(p.validate(), ConfigurationError);
  p = valid_spec();
  p.nodes[0].id = "load";
  EXPECT_THROW(p.validate(), ConfigurationError);
  p = valid_spec();
  p.nodes[0].executors = 2;
  EXPECT_THROW(p.validate(), ConfigurationError);
  p = valid_spec();
  p.nodes[0].model.failure_rate = 1.5;
  EXPECT_THROW(p.validate(), ConfigurationError);
  p = valid_spec();
  p.nodes[0].model.fanout = {FanoutSpec::Kind::Uniform, 1, 3, 2};
  EXPECT_THROW(p.validate(), ConfigurationError);
  p = valid_spec();
  p.nodes[0].device_demand = 3;
  p.device_units = 2;
  EXPECT_THROW(p.validate(), ConfigurationError);
  p = valid_spec();
  p.autoscale.enabled = true;
  p.autoscale.low_watermark = 0.95;
  EXPECT_THROW(p.validate(), ConfigurationError);
  p.autoscale.enabled = false;
  EXPECT_NO_THROW(p.validate());  // ignored when disabled
  p = valid_spec();
  p.loader.initial_executors = 0;
  EXPECT_THROW(p.validate(), ConfigurationError);
}

TEST(Fanout, MeansAndRanges) {
  RngStream rng(3);
  FanoutSpec uniform{FanoutSpec::Kind::Uniform, 0, 0, 6};
  FanoutSpec poisson{FanoutSpec::Kind::Poisson, 0, 0, 0, 2.5};
  FanoutSpec constant{FanoutSpec::Kind::Constant, 4};
  EXPECT_DOUBLE_EQ(uniform.mean(), 3.0);
  EXPECT_DOUBLE_EQ(poisson.mean(), 2.5);
  EXPECT_DOUBLE_EQ(constant.mean(), 4.0);
  double su = 0, sp = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto u = uniform.draw(rng);
    ASSERT_LE(u, 6u);
    su += u;
    sp += poisson.draw(rng);
    ASSERT_EQ(constant.draw(rng), 4u);
  }
  // sd of the mean: uniform sqrt(4/n) = 0.014, poisson sqrt(2.5/n) = 0.011.
  EXPECT_NEAR(su / n, 3.0, 0.07);
  EXPECT_NEAR(sp / n, 2.5, 0.06);
}

// ---- model ------------------------------------------------------------------

TEST(Model, ResultsDoNotDependOnBatching) {
  PredictorNode n = node("detect");
  n.model.failure_rate = 0.2;
  n.model.fanout = {FanoutSpec::Kind::Uniform, 0, 0, 4};
  const auto all = items(0, 64);
  const auto whole = apply_model(99, n, all);
  std::vector<ItemResult> pieces;
  for (std::size_t i = 0; i < all.size();) {
    const std::size_t len = std::min<std::size_t>(1 + i % 7, all.size() - i);
    auto part = apply_model(99, n, std::span<const Item>(all).subspan(i, len));
    pieces.insert(pieces.end(), part.begin(), part.end());
    i += len;
  }
  ASSERT_EQ(whole.size(), pieces.size());
  int errors = 0;
  for (std::size_t i = 0; i < whole.size(); ++i) {
    EXPECT_EQ(describe(whole[i]), describe(pieces[i]));
    errors += whole[i].error.has_value();
  }
  EXPECT_GT(errors, 0);
}

TEST(Model, ChildrenCarryLineageAndOrigin) {
  PredictorNode n = node("m");
  n.model.fanout = {FanoutSpec::Kind::Constant, 3};
  Item parent{42, 7, {1}, "abc"};
  const auto r = apply_model(1, n, std::span<const Item>(&parent, 1));
  ASSERT_EQ(r[0].outputs.size(), 3u);
  for (std::uint32_t i = 0; i < 3; ++i) {
    const auto& c = r[0].outputs[i];
    EXPECT_EQ(c.origin, 42u);
    EXPECT_EQ(c.shard, 7u);
    EXPECT_EQ(c.lineage, (std::vector<std::uint32_t>{1, i}));
    EXPECT_EQ(c.payload, derive_payload(n, parent, i));
    EXPECT_EQ(c.payload.size(), 8u);
  }
  EXPECT_NE(r[0].outputs[0].payload, r[0].outputs[1].payload);
}

TEST(Model, FailureCountWithinBinomialBound) {
  PredictorNode n = node("m");
  n.model.failure_rate = 0.01;
  const auto r = apply_model(2024, n, items(0, 10000));
  int errors = 0;
  for (const auto& x : r) {
    if (x.error) {
      ++errors;
      EXPECT_EQ(x.error->kind, TolerableErrorKind::InferenceError);
      EXPECT_TRUE(x.outputs.empty());
    }
  }
  EXPECT_GE(errors, 50);
  EXPECT_LE(errors, 150);
}

TEST(Model, SameDrawsAcrossDifferentSeedsDiffer) {
  PredictorNode n = node("m");
  n.model.failure_rate = 0.5;
  int diff = 0;
  for (const auto& it : items(0, 200)) diff += draw_failure(1, n, it) != draw_failure(2, n, it);
  EXPECT_GT(diff, 50);
}

TEST(Model, ExecuteBatchSpendsCostScaledBySpeed) {
  PredictorNode n = node("m");
  n.model.cost_per_record_ms = 2.0;
  const auto batch = items(0, 10);
  std::stop_source src;
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = execute_batch(1, n, batch, 0.5, src.get_token());
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
  ASSERT_TRUE(r.has_value());
  EXPECT_EQ(r->size(), 10u);
  EXPECT_GE(ms, 40);
}

TEST(Model, HangingBatchEndsOnlyWhenStopped) {
  PredictorNode n = node("m");
  const auto batch = items(0, 2);
  std::stop_source src;
  std::atomic<bool> done{false};
  std::thread t([&] {
    EXPECT_FALSE(execute_batch(1, n, batch, 1.0, src.get_token(), true).has_value());
    done = true;
  });
  std::this_thread::sleep_for(30ms);
  EXPECT_FALSE(done.load());
  src.request_stop();
  t.join();
  EXPECT_TRUE(done.load());
}

TEST(Model, SimulateWorkIsInterruptible) {
  std::stop_source src;
  std::thread stopper([&] {
    std::this_thread::sleep_for(10ms);
    src.request_stop();
  });
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_FALSE(simulate_work(5000, src.get_token()));
  stopper.join();
  EXPECT_LT(std::chrono::steady_clock::now() - t0, 2s);
  EXPECT_TRUE(simulate_work(0, std::stop_source().get_token()));
}

// ---- timeout / retry -------------------------------------------------------

namespace {

// Hangs on the first `hangs` attempts, then returns the attempt index.
auto hanging_attempt(std::uint32_t hangs) {
  return [hangs](std::uint32_t i, std::stop_token st) -> std::optional<int> {
    if (i < hangs || hangs == UINT32_MAX) {
      simulate_work(60000, st);
      return std::nullopt;
    }
    return static_cast<int>(i);
  };
}

}  // namespace

TEST(TimeoutRetry, SingleHangRestartsOnce) {
  const auto r = run_with_timeout_retry(hanging_attempt(1), 30ms, 2, std::stop_source().get_token());
  ASSERT_TRUE(r.value.has_value());
  EXPECT_EQ(*r.value, 1);
  EXPECT_EQ(r.restarts, 1u);
  EXPECT_FALSE(r.degraded);
  EXPECT_FALSE(r.cancelled);
}

TEST(TimeoutRetry, PermanentHangDegradesAfterAllAttempts) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run_with_timeout_retry(hanging_attempt(UINT32_MAX), 20ms, 2, std::stop_source().get_token());
  EXPECT_TRUE(r.degraded);
  EXPECT_FALSE(r.value.has_value());
  EXPECT_EQ(r.restarts, 3u);
  EXPECT_GE(std::chrono::steady_clock::now() - t0, 60ms);
}

TEST(TimeoutRetry, ZeroRetriesMeansOneAttempt) {
  const auto r = run_with_timeout_retry(hanging_attempt(1), 20ms, 0, std::stop_source().get_token());
  EXPECT_TRUE(r.degraded);
  EXPECT_EQ(r.restarts, 1u);
}

TEST(TimeoutRetry, FastAttemptIsUntouched) {
  const auto r = run_with_timeout_retry(hanging_attempt(0), 500ms, 2, std::stop_source().get_token());
  EXPECT_EQ(r.value, 0);
  EXPECT_EQ(r.restarts, 0u);
}

TEST(TimeoutRetry, DisabledRunsInline) {
  const auto caller = std::this_thread::get_id();
  const auto r = run_with_timeout_retry(
      [&](std::uint32_t, std::stop_token) -> std::optional<bool> { return std::this_thread::get_id() == caller; },
      0ms, 2, std::stop_source().get_token());
  EXPECT_EQ(r.value, true);
}

TEST(TimeoutRetry, OuterStopCancels) {
  std::stop_source outer;
  std::thread stopper([&] {
    std::this_thread::sleep_for(20ms);
    outer.request_stop();
  });
  const auto r = run_with_timeout_retry(hanging_attempt(UINT32_MAX), 5s, 2, outer.get_token());
  stopper.join();
  EXPECT_TRUE(r.cancelled);
  EXPECT_FALSE(r.degraded);
  EXPECT_EQ(r.restarts, 0u);
}
