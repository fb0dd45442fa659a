#include <doctest.h>
#include <propel/csv.hpp>

#include <cstdlib>
#include <string>

#include "../support/tmpdir.hpp"

// End-to-end checks against the built binary. Commands run through
// std::system with stdout/stderr captured into the scratch directory.

namespace {

struct CmdResult {
  int code = -1;
  std::string out;
};

CmdResult run_cli(const std::string& args, const testsupport::TmpDir& tmp,
                  const std::string& tag) {
  std::string out_file = tmp.file("out_" + tag + ".txt");
  std::string cmd = std::string(PROPEL_CLI_PATH) + " " + args + " > " +
                    out_file + " 2>&1";
  int raw = std::system(cmd.c_str());
  CmdResult result;
  result.code = WEXITSTATUS(raw);
  try {
    result.out = propel::read_text_file(out_file);
  } catch (...) {
  }
  return result;
}

std::string src(const std::string& rel) {
  return std::string(PROPEL_SOURCE_DIR) + "/" + rel;
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("eval is deterministic and machine readable") {
  testsupport::TmpDir tmp("cli_eval");
  std::string args = "eval " + src("programs/pendulum_prior.sexp") +
                     " pendulum --episodes 5 --seed0 100";
  CmdResult a = run_cli(args, tmp, "a");
  CmdResult b = run_cli(args, tmp, "b");
  CHECK(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out.find("mean=") != std::string::npos);
  CHECK(a.out.find("std=") != std::string::npos);
  CHECK(a.out.find("n=5") != std::string::npos);
}

TEST_CASE("zero-torque pendulum return sits in the physical band") {
  testsupport::TmpDir tmp("cli_zero");
  std::string zero = tmp.file("zero.sexp");
  propel::write_text_file(zero, "(const 0)\n");
  CmdResult r = run_cli("eval " + zero + " pendulum --episodes 10", tmp, "z");
  REQUIRE(r.code == 0);
  double mean = 0;
  REQUIRE(std::sscanf(r.out.c_str(), "mean=%lf", &mean) == 1);
  CHECK(mean <= 0.0);
  CHECK(mean >= -2000.0);
}

TEST_CASE("malformed program file exits 2") {
  testsupport::TmpDir tmp("cli_bad");
  std::string bad = tmp.file("bad.sexp");
  propel::write_text_file(bad, "(pid 0 0.0 1.0)\n");
  CmdResult r = run_cli("eval " + bad + " pendulum", tmp, "bad");
  CHECK(r.code == 2);
}

TEST_CASE("unknown config key exits 2 and names the key") {
  testsupport::TmpDir tmp("cli_key");
  std::string cfg = tmp.file("bad.cfg");
  propel::write_text_file(cfg, "seed=1\nfoo=bar\n");
  CmdResult r = run_cli("--config " + cfg + " --run-dir " + tmp.file("run") +
                            " train",
                        tmp, "key");
  CHECK(r.code == 2);
  CHECK(r.out.find("foo") != std::string::npos);
}

TEST_CASE("verify prints a point interval for a constant program") {
  testsupport::TmpDir tmp("cli_verify");
  std::string prog = tmp.file("c.sexp");
  propel::write_text_file(prog, "(const 0.3)\n");
  std::string box = tmp.file("b.box");
  propel::write_text_file(box, "obs 0 -1 1\n");
  CmdResult r = run_cli("verify " + prog + " " + box, tmp, "v");
  CHECK(r.code == 0);
  CHECK(r.out.find("[0.3, 0.3]") != std::string::npos);
}

TEST_CASE("sandbox zero-error config reports a vanishing final regret") {
  testsupport::TmpDir tmp("cli_sandbox");
  std::string cfg = tmp.file("s.cfg");
  propel::write_text_file(cfg,
                          "seed=0\nsandbox.dim=2\nsandbox.iters=4000\n"
                          "sandbox.step_schedule=constant\nsandbox.step_c=0.5\n"
                          "sandbox.box_lo=-1\nsandbox.box_hi=1\n"
                          "sandbox.target=0.3,-0.2\nsandbox.repeats=2\n"
                          "sandbox.trace_stride=50\n");
  CmdResult r =
      run_cli("--config " + cfg + " --run-dir " + tmp.file("run") + " sandbox",
              tmp, "s");
  REQUIRE(r.code == 0);
  double final_regret = 1.0;
  auto pos = r.out.find("final_avg_regret=");
  REQUIRE(pos != std::string::npos);
  std::sscanf(r.out.c_str() + pos, "final_avg_regret=%lf", &final_regret);
  CHECK(final_regret < 1e-6);
  propel::CsvTable manifest = propel::read_csv(tmp.file("run/manifest.csv"));
  CHECK(manifest.rows.size() == 1);
  propel::CsvTable trace =
      propel::read_csv(tmp.file("run/" + manifest.rows[0][0]));
  CHECK(trace.columns.size() == 5);
}

TEST_CASE("tiny train run writes the run directory layout") {
  testsupport::TmpDir tmp("cli_train");
  std::string cfg = tmp.file("t.cfg");
  propel::write_text_file(
      cfg,
      "seed=3\nenv.name=pendulum\ninit.program=" +
          src("programs/pendulum_prior.sexp") +
          "\npropel.iterations=1\nupdate.steps=150\nupdate.warmup=40\n"
          "update.batch=16\nupdate.buffer=1000\nupdate.hidden=8,8\n"
          "dagger.rounds=1\ndagger.episodes=1\ndagger.horizon=50\n"
          "dagger.eval_episodes=1\neval.episodes=2\neval.horizon=50\n");
  std::string run = tmp.file("run");
  CmdResult r = run_cli("--config " + cfg + " --run-dir " + run + " train", tmp,
                        "t");
  REQUIRE(r.code == 0);
  propel::CsvTable metrics = propel::read_csv(run + "/metrics.csv");
  CHECK(metrics.rows.size() == 2);  // prior row + one iteration
  CHECK(propel::read_text_file(run + "/config.copy").find("seed=3") !=
        std::string::npos);
  CHECK_NOTHROW(propel::read_text_file(run + "/iter_001/program.sexp"));
  CHECK_NOTHROW(propel::read_text_file(run + "/iter_001/theta.nnp"));
  CHECK_NOTHROW(propel::read_text_file(run + "/iter_001/metrics.row"));
}

TEST_CASE("project with a lambda-0 expert prints a tiny probe distance") {
  testsupport::TmpDir tmp("cli_project");
  std::string cfg = tmp.file("p.cfg");
  propel::write_text_file(cfg,
                          "seed=5\nenv.name=pendulum\ndagger.rounds=2\n"
                          "dagger.episodes=2\ndagger.horizon=100\n"
                          "dagger.eval_episodes=1\n");
  std::string run = tmp.file("run");
  CmdResult r = run_cli("--config " + cfg + " --run-dir " + run +
                            " project --program " +
                            src("programs/pendulum_prior.sexp") + " --lambda 0",
                        tmp, "p");
  REQUIRE(r.code == 0);
  double dist = 1.0;
  auto pos = r.out.find("probe_distance=");
  REQUIRE(pos != std::string::npos);
  std::sscanf(r.out.c_str() + pos, "probe_distance=%lf", &dist);
  CHECK(dist < 1e-6);
  CHECK_NOTHROW(propel::read_csv(run + "/dataset.csv"));
  CHECK_NOTHROW(propel::read_text_file(run + "/projection_metrics.csv"));
}

TEST_SUITE_END();
