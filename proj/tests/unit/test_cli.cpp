// SPDX-License-Identifier: Apache-2.0
#include "../oracles.hpp"

#include "lavino/cli.hpp"
#include "lavino/config.hpp"
#include "lavino/metrics.hpp"
#include "lavino/samplers.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace lavino;
namespace fs = std::filesystem;

namespace {

struct Run
{
  int code;
  std::string out;
  std::string err;
};

Run lavino_cli(std::vector<std::string> const &args)
{
  std::ostringstream out, err;
  int const code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(fs::path const &p)
{
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Workspace
{
  fs::path dir;
  fs::path input;

  explicit Workspace(std::string const &name, Shape s = Shape{9, 16, 16, 1})
    : dir(fs::temp_directory_path() / ("lavino_cli_" + name))
    , input(dir / "input.vten")
  {
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto x = oracle::moving_square(Shape{s.frames, 64, 64, s.channels});
    VideoTensor crop(s);
    for (std::size_t t = 0; t < s.frames; ++t) {
      for (std::size_t h = 0; h < s.height; ++h) {
        for (std::size_t w = 0; w < s.width; ++w) {
          for (std::size_t c = 0; c < s.channels; ++c) {
            crop(t, h, w, c) = x(t, (h + 16) % 64, (w + 16) % 64, c);
          }
        }
      }
    }
    save_video(crop, input, VideoFormat::Raw);
  }

  fs::path config(std::string const &name, std::string const &body) const
  {
    auto const p = dir / name;
    std::ofstream(p) << "paths.input = " << input.string() << "\n"
                     << "paths.measurement = " << (dir / "deg" / "measurement.vten").string() << "\n"
                     << body;
    return p;
  }
};

} // namespace

TEST_SUITE("cli")
{
  TEST_CASE("metadata sidecar round trip")
  {
    cli::MeasurementMeta const m{"temporal-pool:4,spatial-pool:4", Shape{25, 768, 1280, 3}, Shape{7, 192, 320, 3},
                                 0.001, 42, "A"};
    auto const back = cli::parse_meta(cli::format_meta(m));
    CHECK(back.operator_spec == m.operator_spec);
    CHECK(back.input_shape == m.input_shape);
    CHECK(back.output_shape == m.output_shape);
    CHECK(back.sigma_n == m.sigma_n);
    CHECK(back.seed == 42);
    CHECK(back.problem == "A");
    CHECK_THROWS_AS(cli::parse_meta("operator = identity\n"), ConfigError);
    CHECK(cli::meta_path("a/measurement.vten") == fs::path("a/measurement.meta"));
    CHECK(cli::parse_shape("(1,2,3,4)") == Shape{1, 2, 3, 4});
    CHECK_THROWS_AS(cli::parse_shape("1,2,3"), std::invalid_argument);
  }

  TEST_CASE("degrade, restore, evaluate")
  {
    Workspace const ws("pipeline");
    auto const cfg = ws.config("a.cfg", "problem = A\nsampler = latino-v\nprior.vcm = builtin:smoothing\n"
                                        "paths.reference = " + ws.input.string() + "\n");
    auto const deg = ws.dir / "deg";
    auto r = lavino_cli({"degrade", "--config", cfg.string(), "--output", deg.string(), "--seed", "3"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    auto const y = load_video(deg / "measurement.vten", VideoFormat::Raw);
    CHECK(y.shape() == Shape{3, 4, 4, 1});
    auto const meta = cli::parse_meta(slurp(deg / "measurement.meta"));
    CHECK(meta.seed == 3);
    CHECK(meta.operator_spec == "temporal-pool:4,spatial-pool:4");

    // Same seed, same measurement; a different seed changes it.
    r = lavino_cli({"degrade", "--config", cfg.string(), "--output", (ws.dir / "deg2").string(), "--seed", "3"});
    CHECK(max_abs_diff(load_video(ws.dir / "deg2" / "measurement.vten", VideoFormat::Raw), y) == 0.0);
    r = lavino_cli({"degrade", "--config", cfg.string(), "--output", (ws.dir / "deg3").string(), "--seed", "4"});
    CHECK(max_abs_diff(load_video(ws.dir / "deg3" / "measurement.vten", VideoFormat::Raw), y) > 0.0);

    auto const out = ws.dir / "restored";
    r = lavino_cli({"restore", "--config", cfg.string(), "--output", out.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(fs::exists(out / "restored.vten"));
    CHECK(fs::exists(out / "frames" / "frame_00008.png"));
    auto const report = parse_report(slurp(out / "report.txt"));
    CHECK(report.sampler == "latino-v");
    CHECK(report.nfe == 5);
    CHECK(report.iterations.back().residual <= report.initial_residual);
    auto const metrics = parse_metrics(slurp(out / "metrics.txt"));
    CHECK(metrics.psnr_per_frame.size() == 9);

    r = lavino_cli({"evaluate", (out / "restored.vten").string(), ws.input.string()});
    CHECK(r.code == 0);
    CHECK(parse_metrics(r.out).psnr == doctest::Approx(metrics.psnr));
    r = lavino_cli({"evaluate", ws.input.string(), ws.input.string(), "--output", (ws.dir / "self.txt").string()});
    CHECK(r.code == 0);
    auto const self = parse_metrics(slurp(ws.dir / "self.txt"));
    CHECK(self.psnr == 100.0);
    CHECK(self.ssim == doctest::Approx(1.0));
  }

  TEST_CASE("every sampler runs from the command line")
  {
    Workspace const ws("samplers");
    auto const base = std::string("problem = A\nprior.vcm = builtin:gaussian\nprior.icm = builtin:gaussian\n"
                                  "prior.gaussian_mean = 0.5\nprior.gaussian_std = 0.3\n");
    auto const deg_cfg = ws.config("deg.cfg", base);
    REQUIRE(lavino_cli({"degrade", "--config", deg_cfg.string(), "--output", (ws.dir / "deg").string()}).code == 0);
    for (auto [sampler, nfe] : {std::pair{"latino", 9}, std::pair{"latino-v", 5}, std::pair{"vision-xl", 18},
                                std::pair{"admm-tv", 0}}) {
      auto const cfg = ws.config(std::string(sampler) + ".cfg", base + "sampler = " + sampler + "\n");
      auto const out = ws.dir / sampler;
      auto const r = lavino_cli({"restore", "--config", cfg.string(), "--output", out.string(), "--seed", "2"});
      CAPTURE(sampler);
      REQUIRE_MESSAGE(r.code == 0, r.err);
      CHECK(parse_report(slurp(out / "report.txt")).nfe == nfe);
    }
  }

  TEST_CASE("single-frame sampler needs a frame-wise operator")
  {
    Workspace const ws("image");
    auto const cfg = ws.config("img.cfg", "problem = custom\noperator = spatial-pool:4\nsampler = latino-image\n");
    REQUIRE(lavino_cli({"degrade", "--config", cfg.string(), "--output", (ws.dir / "deg").string()}).code == 0);
    auto r = lavino_cli({"restore", "--config", cfg.string(), "--output", (ws.dir / "out").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(parse_report(slurp(ws.dir / "out" / "report.txt")).nfe == 9 * 4);

    auto const temporal = ws.config("t.cfg", "problem = A\nsampler = latino-image\n");
    REQUIRE(lavino_cli({"degrade", "--config", temporal.string(), "--output", (ws.dir / "deg").string()}).code == 0);
    r = lavino_cli({"restore", "--config", temporal.string(), "--output", (ws.dir / "out2").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("frame-wise") != std::string::npos);
  }

  TEST_CASE("problem C with file init runs the 4 + 3 schedule")
  {
    Workspace const ws("fileinit");
    auto const init = ws.dir / "init.vten";
    save_video(VideoTensor(Shape{9, 16, 16, 1}, 0.3), init, VideoFormat::Raw);
    auto const cfg = ws.config("c.cfg", "problem = C\nsampler.init = file\npaths.init_file = " + init.string() + "\n");
    REQUIRE(lavino_cli({"degrade", "--config", cfg.string(), "--output", (ws.dir / "deg").string()}).code == 0);
    auto const r = lavino_cli({"restore", "--config", cfg.string(), "--output", (ws.dir / "out").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    auto const report = parse_report(slurp(ws.dir / "out" / "report.txt"));
    CHECK(report.nfe == 7);
    CHECK(report.init == "file");
  }

  TEST_CASE("validation failures exit with code 1")
  {
    Workspace const ws("invalid", Shape{9, 16, 18, 1});
    auto const cfg = ws.config("a.cfg", "problem = A\n");
    auto r = lavino_cli({"degrade", "--config", cfg.string(), "--output", (ws.dir / "deg").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("18") != std::string::npos);

    r = lavino_cli({"degrade", "--config", (ws.dir / "missing.cfg").string(), "--output", ws.dir.string()});
    CHECK(r.code == 1);
    r = lavino_cli({"degrade", "--config", cfg.string(), "--output", ws.dir.string(), "--set", "bogus.key=1"});
    CHECK(r.code == 1);
    CHECK(r.err.find("bogus.key") != std::string::npos);
    r = lavino_cli({"degrade", "--config", cfg.string(), "--output", ws.dir.string(), "--set", "novalue"});
    CHECK(r.code == 1);
    CHECK(lavino_cli({"transmogrify"}).code == 1);
    CHECK(lavino_cli({}).code == 1);
    CHECK(lavino_cli({"degrade", "--config", cfg.string()}).code == 1);

    // Restore without a sidecar.
    fs::create_directories(ws.dir / "deg");
    save_video(VideoTensor(Shape{3, 4, 4, 1}), ws.dir / "deg" / "measurement.vten", VideoFormat::Raw);
    r = lavino_cli({"restore", "--config", cfg.string(), "--output", (ws.dir / "out").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("sidecar") != std::string::npos);

    auto const vxl = ws.config("v.cfg", "problem = A\nsampler = vision-xl\nprior.vcm = builtin:smoothing\n");
    r = lavino_cli({"restore", "--config", vxl.string(), "--output", (ws.dir / "out").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("prior.vcm") != std::string::npos);
  }

  TEST_CASE("evaluate reports both shapes on mismatch")
  {
    Workspace const ws("evalshape");
    auto const other = ws.dir / "other.vten";
    save_video(VideoTensor(Shape{8, 16, 16, 1}), other, VideoFormat::Raw);
    auto const r = lavino_cli({"evaluate", ws.input.string(), other.string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("(9,16,16,1)") != std::string::npos);
    CHECK(r.err.find("(8,16,16,1)") != std::string::npos);
  }

  TEST_CASE("slice")
  {
    Workspace const ws("slice");
    auto const png = ws.dir / "slice" / "col5.png";
    auto r = lavino_cli({"slice", ws.input.string(), "--column", "5", "--output", png.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    auto const img = load_video(png.parent_path(), VideoFormat::FrameDir);
    auto const expect = slice_extract(load_video(ws.input, VideoFormat::Raw), 5);
    REQUIRE(img.shape() == Shape{1, expect.rows, expect.cols, expect.channels});
    for (std::size_t i = 0; i < expect.rows; ++i) {
      for (std::size_t t = 0; t < expect.cols; ++t) {
        CHECK(img(0, i, t, 0) == doctest::Approx(std::round(255.0 * expect(i, t, 0)) / 255.0));
      }
    }
    r = lavino_cli({"slice", ws.input.string(), "--column", "16", "--output", png.string()});
    CHECK(r.code == 1);
  }

  TEST_CASE("verify")
  {
    auto r = lavino_cli({"verify"});
    CHECK(r.code == 0);
    CHECK(r.out.find("FAIL") == std::string::npos);
    CHECK(r.out.find("pdhg vs adam") != std::string::npos);
    r = lavino_cli({"verify", "--test-break-adjoint"});
    CHECK(r.code == 3);
    CHECK(r.out.find("FAIL dot test") != std::string::npos);
  }

  TEST_CASE("runtime failures exit with code 2")
  {
    Workspace const ws("runtime");
    auto const cfg = ws.config("ext.cfg", "problem = A\nsampler = latino-v\nprior.vcm = external:" +
                                            std::string(LAVINO_FAKE_PRIOR_SERVER) + " die\n");
    REQUIRE(lavino_cli({"degrade", "--config", cfg.string(), "--output", (ws.dir / "deg").string()}).code == 0);
    auto const r = lavino_cli({"restore", "--config", cfg.string(), "--output", (ws.dir / "out").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("prior server") != std::string::npos);
  }
}
