#include <gtest/gtest.h>

#include "support.hpp"

using namespace vaeabsa;
using vaeabsa::testing::read_bytes;
using vaeabsa::testing::TempDir;
using vaeabsa::testing::write_bytes;

namespace {

Checkpoint sample(bool with_adam) {
  auto g = vaeabsa::testing::make_grad_problem({}, 9);
  Checkpoint ck;
  ck.shape = g.shape;
  ck.params = g.params;
  ck.epochs_completed = 3;
  ck.rng_state = rng_to_string(Rng(12));
  if (with_adam) {
    AdamState st = AdamState::zeros(g.shape);
    st.step = 41;
    st.m = g.params;
    st.v.beta.setConstant(0.5);
    ck.adam = st;
  }
  return ck;
}

}  // namespace

TEST(Checkpoint, RoundTripWithOptimizer) {
  TempDir dir;
  const auto ck = sample(true);
  write_checkpoint(ck, dir.file("m.ckpt"));
  const auto back = read_checkpoint(dir.file("m.ckpt"));
  EXPECT_EQ(back.shape, ck.shape);
  EXPECT_EQ(back.params, ck.params);
  ASSERT_TRUE(back.adam.has_value());
  EXPECT_EQ(back.adam->step, 41u);
  EXPECT_EQ(back.adam->m, ck.adam->m);
  EXPECT_EQ(back.adam->v, ck.adam->v);
  EXPECT_EQ(back.epochs_completed, 3u);
  EXPECT_EQ(back.rng_state, ck.rng_state);
}

TEST(Checkpoint, RoundTripWithoutOptimizer) {
  TempDir dir;
  const auto ck = sample(false);
  write_checkpoint(ck, dir.file("m.ckpt"));
  const auto back = read_checkpoint(dir.file("m.ckpt"));
  EXPECT_FALSE(back.adam.has_value());
  EXPECT_EQ(back.params, ck.params);
  write_checkpoint(back, dir.file("n.ckpt"));
  EXPECT_EQ(read_bytes(dir.file("m.ckpt")), read_bytes(dir.file("n.ckpt")));
}

TEST(Checkpoint, BadMagicIsFormatError) {
  TempDir dir;
  write_checkpoint(sample(false), dir.file("m.ckpt"));
  auto bytes = read_bytes(dir.file("m.ckpt"));
  bytes[0] = 'X';
  write_bytes(dir.file("m.ckpt"), bytes);
  EXPECT_THROW(read_checkpoint(dir.file("m.ckpt")), FormatError);
}

TEST(Checkpoint, TruncationIsCorruptionError) {
  TempDir dir;
  write_checkpoint(sample(true), dir.file("m.ckpt"));
  const auto bytes = read_bytes(dir.file("m.ckpt"));
  for (std::size_t cut : {std::size_t{2}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    write_bytes(dir.file("t.ckpt"), bytes.substr(0, cut));
    EXPECT_ANY_THROW(read_checkpoint(dir.file("t.ckpt"))) << cut;
  }
  write_bytes(dir.file("t.ckpt"), bytes.substr(0, bytes.size() - 1));
  EXPECT_THROW(read_checkpoint(dir.file("t.ckpt")), CorruptionError);
}

TEST(Checkpoint, TrailingBytesRejected) {
  TempDir dir;
  write_checkpoint(sample(false), dir.file("m.ckpt"));
  write_bytes(dir.file("m.ckpt"), read_bytes(dir.file("m.ckpt")) + "x");
  EXPECT_THROW(read_checkpoint(dir.file("m.ckpt")), FormatError);
}

TEST(Checkpoint, TensorTableMismatchRejected) {
  TempDir dir;
  write_checkpoint(sample(false), dir.file("m.ckpt"));
  auto bytes = read_bytes(dir.file("m.ckpt"));
  const auto at = bytes.find("\"enc_w1\"");
  ASSERT_NE(at, std::string::npos);
  bytes.replace(at, 8, "\"enc_wX\"");
  write_bytes(dir.file("m.ckpt"), bytes);
  EXPECT_THROW(read_checkpoint(dir.file("m.ckpt")), FormatError);
}

TEST(Checkpoint, MissingFileIsValidationError) {
  EXPECT_THROW(read_checkpoint("/nonexistent/m.ckpt"), ValidationError);
}

TEST(Checkpoint, ShapeMismatchOnWriteRejected) {
  TempDir dir;
  auto ck = sample(false);
  ck.shape.vocab_size += 1;
  EXPECT_ANY_THROW(write_checkpoint(ck, dir.file("m.ckpt")));
}
