#include <doctest.h>

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "gradsurgeon/checkpoint.hpp"
#include "gradsurgeon/config.hpp"
#include "gradsurgeon/error.hpp"
#include "gradsurgeon/trainer.hpp"

using namespace gradsurgeon;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& body) {
  const fs::path p = fs::temp_directory_path() / name;
  std::ofstream(p) << body;
  return p;
}

std::string error_text(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("format_double round-trips exactly") {
  Rng rng(7);
  for (int i = 0; i < 2000; ++i) {
    const double v = rng.normal() * std::exp(30.0 * rng.normal());
    const double back = parse_double(format_double(v), "v");
    CHECK(std::bit_cast<std::uint64_t>(back) == std::bit_cast<std::uint64_t>(v));
  }
  for (double v : {0.0, -0.0, 1e-300, 5e-324, 1.7976931348623157e308, 0.1, 1e-4}) {
    CHECK(std::bit_cast<std::uint64_t>(parse_double(format_double(v), "v")) ==
          std::bit_cast<std::uint64_t>(v));
  }
  CHECK_THROWS_AS(parse_double("1.5x", "v"), ValidationError);
  CHECK_THROWS_AS(parse_double("", "v"), ValidationError);
  CHECK_THROWS_AS(parse_double("inf", "v"), ValidationError);
  CHECK_THROWS_AS(parse_double("nan", "v"), ValidationError);
  CHECK(parse_uint("42", "n") == 42);
  CHECK_THROWS_AS(parse_uint("-1", "n"), ValidationError);
  CHECK_THROWS_AS(parse_uint("3.0", "n"), ValidationError);
}

TEST_CASE("fnv1a and hex64") {
  // Published FNV-1a 64-bit test vectors.
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("config keys") {
  RunConfig cfg;
  set_config_value(cfg, "mode", "suppress_only");
  set_config_value(cfg, "lambda", "0.35");
  set_config_value(cfg, "data.n_train", "128");
  set_config_value(cfg, "encoder", "tanh");
  set_config_value(cfg, "seed", "9");
  CHECK(cfg.surgery.mode == SurgeryMode::kSuppressOnly);
  CHECK(cfg.surgery.lambda == 0.35);
  CHECK(cfg.data.n_train == 128);
  CHECK(cfg.encoder == BaseEncoderKind::kTanh);
  cfg.finalize();
  CHECK(cfg.data.seed == 9);
  CHECK(cfg.surgery.seed == 9);

  CHECK(error_text([&] { set_config_value(cfg, "lamda", "1"); }).find("'lamda'") != std::string::npos);
  CHECK(error_text([&] { set_config_value(cfg, "lr", "fast"); }).find("'lr'") != std::string::npos);
  CHECK_THROWS_AS(set_config_value(cfg, "mode", "everything"), ValidationError);
  CHECK_THROWS_AS(set_config_value(cfg, "encoder", "resnet"), ValidationError);

  RunConfig bad;
  set_config_value(bad, "lora_rank", "0");
  CHECK_THROWS_AS(bad.finalize(), ValidationError);

  // Every schema key appears in the echo, in schema order.
  const auto echo = echo_config(RunConfig{});
  REQUIRE(echo.size() == config_keys().size());
  for (std::size_t i = 0; i < echo.size(); ++i) CHECK(echo[i].first == config_keys()[i].name);
}

TEST_CASE("config echo reproduces the config") {
  RunConfig cfg;
  cfg.seed = 123;
  cfg.surgery.lambda = 0.1 + 0.2;  // not representable as a short decimal
  cfg.surgery.lr = 3e-5;
  cfg.surgery.mode = SurgeryMode::kFullImgGrad;
  cfg.data.corr_out = 1.0 / 3.0;
  cfg.encoder = BaseEncoderKind::kTanh;
  cfg.encoder_gain = 0.7;
  cfg.finalize();

  RunConfig back;
  for (const auto& [k, v] : echo_config(cfg)) set_config_value(back, k, v);
  back.finalize();
  CHECK(config_text(back) == config_text(cfg));
  CHECK(config_hash(back) == config_hash(cfg));
  CHECK(back.surgery.lambda == cfg.surgery.lambda);
  CHECK(back.data.corr_out == cfg.data.corr_out);

  RunConfig other = cfg;
  other.surgery.lambda = 0.2;
  CHECK(config_hash(other) != config_hash(cfg));
  CHECK(config_hash(cfg).size() == 16);
}

TEST_CASE("config files") {
  const auto ok = write_temp("gs_ok.conf",
                             "# comment line\n"
                             "\n"
                             "mode = align_only   # trailing comment\n"
                             "  lambda=0.5\n"
                             "epochs = 3\n");
  const RunConfig cfg = load_config(ok);
  CHECK(cfg.surgery.mode == SurgeryMode::kAlignOnly);
  CHECK(cfg.surgery.lambda == 0.5);
  CHECK(cfg.surgery.epochs == 3);
  CHECK(cfg.surgery.lr == 1e-4);

  const auto dup = write_temp("gs_dup.conf", "lambda = 0.1\nlambda = 0.2\n");
  CHECK(error_text([&] { load_config(dup); }).find(":2") != std::string::npos);

  const auto nosep = write_temp("gs_nosep.conf", "mode = full\nlambda 0.1\n");
  CHECK(error_text([&] { load_config(nosep); }).find(":2") != std::string::npos);

  const auto unknown = write_temp("gs_unknown.conf", "\nmomentum = 0.9\n");
  const std::string msg = error_text([&] { load_config(unknown); });
  CHECK(msg.find("momentum") != std::string::npos);

  CHECK_THROWS_AS(load_config(fs::temp_directory_path() / "gs_missing_file.conf"), ValidationError);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  RunConfig cfg;
  cfg.seed = 5;
  cfg.encoder = BaseEncoderKind::kTanh;
  cfg.encoder_depth = 2;
  cfg.data.n_train = 96;
  cfg.data.n_test_in = 10;
  cfg.data.n_test_cross = 10;
  cfg.surgery.lr = 1e-2;
  cfg.finalize();
  const DatasetSplit data = generate_synthetic(cfg.data);
  const DetectorModel model =
      train(cfg.surgery, data.train,
            build_model(make_base_encoder(cfg, cfg.data.input_dim()), data.train, cfg.surgery))
          .model;
  REQUIRE_FALSE(model.student.adapter.b == Mat64(model.student.adapter.b.rows(), model.student.adapter.b.cols()));

  const fs::path path = fs::temp_directory_path() / "gs_ckpt.txt";
  write_checkpoint(Checkpoint{model, cfg}, path);
  const Checkpoint back = read_checkpoint(path);

  CHECK(fingerprint(back.model.student.base) == fingerprint(model.student.base));
  CHECK(fingerprint(back.model.teacher.base) == fingerprint(model.teacher.base));
  CHECK(fingerprint(back.model.student.adapter) == fingerprint(model.student.adapter));
  CHECK(back.model.head_img == model.head_img);
  CHECK(back.model.head_text == model.head_text);
  CHECK(back.model.head_teacher == model.head_teacher);
  CHECK(back.model.head_teacher.frozen);
  CHECK(config_hash(back.config) == config_hash(cfg));

  // Writing the restored checkpoint yields the same bytes.
  const fs::path again = fs::temp_directory_path() / "gs_ckpt2.txt";
  write_checkpoint(back, again);
  std::ifstream a(path), b(again);
  const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);

  SUBCASE("corrupt files are rejected") {
    const auto truncated = write_temp("gs_ckpt_trunc.txt", sa.substr(0, sa.size() / 2));
    CHECK_THROWS_AS(read_checkpoint(truncated), ValidationError);
    const auto wrong_magic = write_temp("gs_ckpt_magic.txt", "gradsurgeon-checkpoint 99\n");
    CHECK_THROWS_AS(read_checkpoint(wrong_magic), ValidationError);
  }
}

TEST_CASE("shipped default config equals the built-in defaults") {
  RunConfig shipped = load_config(fs::path(GRADSURGEON_CONFIGS) / "default.conf");
  shipped.finalize();
  RunConfig defaults;
  defaults.finalize();
  CHECK(config_text(shipped) == config_text(defaults));
  CHECK(shipped.surgery.lambda == 0.2);
  CHECK(shipped.surgery.lr == 1e-4);
  CHECK(shipped.surgery.batch_size == 32);
  CHECK(shipped.surgery.epochs == 1);
  CHECK(shipped.surgery.optimizer == OptimizerKind::kAdam);
  CHECK(shipped.surgery.lora_rank == 6);
  CHECK(shipped.surgery.lora_alpha == 6.0);
  CHECK(shipped.surgery.lora_dropout == 0.8);
}
