#include "flowrecon/cli.hpp"

#include "flowrecon/pipeline.hpp"
#include "flowrecon/training.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>
#include <limits>

namespace flowrecon {

namespace {

std::string version_text()
{
  return std::string("flowrecon ") + FLOWRECON_VERSION + "\ncontainer format " + kContainerFormat + "\nparameter format " +
         kParamsFormat + "\n";
}

std::string join_args(int argc, char const *const *argv)
{
  std::string s;
  for (int i = 0; i < argc; i++) {
    if (i) { s += ' '; }
    s += argv[i];
  }
  return s;
}

double parse_snr(std::string const &s)
{
  if (s == "inf" || s == "none") { return std::numeric_limits<double>::infinity(); }
  return std::stod(s);
}

} // namespace

int run_cli(int argc, char const *const *argv)
{
  CLI::App app{"4D flow MRI reconstruction toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_text());

  // phantom
  auto *ph = app.add_subcommand("phantom", "simulate a flow phantom and write a fully sampled container");
  std::string ph_out, ph_profile = "desk", ph_snr = "30";
  Index ph_coils = 4;
  std::uint64_t ph_seed = 1, ph_coil_seed = 7;
  double ph_radius = 0.0, ph_peak = 0.0;
  ph->add_option("--out", ph_out, "output container directory")->required();
  ph->add_option("--profile", ph_profile, "grid: desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  ph->add_option("--coils", ph_coils, "receive coils")->check(CLI::PositiveNumber);
  ph->add_option("--snr", ph_snr, "noise SNR in dB, or inf");
  ph->add_option("--seed", ph_seed, "phantom and noise seed");
  ph->add_option("--coil-seed", ph_coil_seed, "coil map seed");
  ph->add_option("--radius", ph_radius, "vessel radius in voxels");
  ph->add_option("--peak-velocity", ph_peak, "peak velocity in cm/s");

  // sample
  auto *sa = app.add_subcommand("sample", "undersample a container with a golden-angle mask");
  std::string sa_in, sa_out;
  double sa_R = 10.0, sa_angle = 111.246;
  std::uint64_t sa_seed = 0;
  sa->add_option("--in", sa_in, "input container")->required();
  sa->add_option("--out", sa_out, "output container")->required();
  sa->add_option("--R", sa_R, "target acceleration")->check(CLI::Range(1.0, 1e6));
  sa->add_option("--seed", sa_seed, "sampling seed");
  sa->add_option("--angle", sa_angle, "angle increment in degrees")->check(CLI::Range(0.0, 360.0));

  // recon
  auto *rc = app.add_subcommand("recon", "reconstruct the container's k-space");
  std::string rc_in, rc_out, rc_method = "zerofill", rc_weights;
  LLRConfig llr;
  std::uint64_t rc_seed = 0;
  rc->add_option("--in", rc_in, "input container")->required();
  rc->add_option("--out", rc_out, "output container")->required();
  rc->add_option("--method", rc_method, "zerofill, csllr, flowvn or hamvn")
    ->check(CLI::IsMember({"zerofill", "csllr", "flowvn", "hamvn"}));
  rc->add_option("--weights", rc_weights, "trained network parameters");
  rc->add_option("--lambda", llr.lambda, "LLR regularisation weight")->check(CLI::NonNegativeNumber);
  rc->add_option("--iters", llr.max_iters, "FISTA iterations")->check(CLI::PositiveNumber);
  rc->add_option("--patch", llr.patch_size, "LLR patch size")->check(CLI::PositiveNumber);
  rc->add_option("--seed", rc_seed, "seed for patch shifts and untrained networks");

  // train
  auto *tr = app.add_subcommand("train", "train a network on simulated phantoms");
  std::string tr_profile = "desk", tr_out, tr_variant = "flowvn";
  Index tr_iters = -1, tr_volumes = 2, tr_coils = 4;
  std::uint64_t tr_seed = 0;
  bool tr_verbose = false;
  tr->add_option("--profile", tr_profile, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  tr->add_option("--variant", tr_variant, "flowvn or hamvn")->check(CLI::IsMember({"flowvn", "hamvn"}));
  tr->add_option("--iters", tr_iters, "optimiser iterations (profile default when omitted)");
  tr->add_option("--out", tr_out, "output directory for params.bin and metrics.csv")->required();
  tr->add_option("--volumes", tr_volumes, "training phantoms")->check(CLI::PositiveNumber);
  tr->add_option("--coils", tr_coils, "receive coils")->check(CLI::PositiveNumber);
  tr->add_option("--seed", tr_seed, "training seed");
  tr->add_flag("--verbose", tr_verbose, "print checkpoints");

  // eval
  auto *ev = app.add_subcommand("eval", "compare a reconstruction with its reference and append metrics");
  std::string ev_in, ev_csv, ev_against = "reference";
  ev->add_option("--in", ev_in, "container with a reconstruction")->required();
  ev->add_option("--csv", ev_csv, "metrics CSV (appended)")->required();
  ev->add_option("--against", ev_against, "reference or truth")->check(CLI::IsMember({"reference", "truth"}));

  // report
  auto *rp = app.add_subcommand("report", "aggregate metrics CSVs into plot data");
  std::vector<std::string> rp_csvs;
  std::string rp_out;
  rp->add_option("csv", rp_csvs, "metrics CSV files")->required();
  rp->add_option("--out", rp_out, "output directory")->required();

  // benchmark
  auto *bm = app.add_subcommand("benchmark", "time the reconstruction methods");
  std::string bm_profile = "paper", bm_csv;
  std::vector<std::string> bm_methods{"flowvn", "hamvn", "csllr"};
  BenchmarkOptions bo;
  bm->add_option("--profile", bm_profile, "desk or paper geometry")->check(CLI::IsMember({"desk", "paper"}));
  bm->add_option("--methods", bm_methods, "methods to time");
  bm->add_option("--R", bo.R, "acceleration")->check(CLI::Range(1.0, 1e6));
  bm->add_option("--encodings", bo.encodings, "velocity encodings to reconstruct")->check(CLI::Range(1, 4));
  bm->add_option("--coils", bo.coils, "receive coils")->check(CLI::PositiveNumber);
  bm->add_option("--csv", bm_csv, "write the timing table here");

  try {
    app.parse(argc, argv);
  } catch (CLI::CallForHelp const &e) {
    return app.exit(e);
  } catch (CLI::CallForAllHelp const &e) {
    return app.exit(e);
  } catch (CLI::CallForVersion const &e) {
    return app.exit(e);
  } catch (CLI::ParseError const &e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    std::string const cmdline = join_args(argc, argv);
    if (*ph) {
      PhantomConfig cfg = ph_profile == "paper" ? PhantomConfig::paper_geometry() : PhantomConfig::desk();
      cfg.noise_snr_db = parse_snr(ph_snr);
      cfg.seed = ph_seed;
      if (ph_radius > 0.0) { cfg.tube_radius = ph_radius; }
      if (ph_peak > 0.0) { cfg.peak_velocity = ph_peak; }
      Container c = phantom_container(cfg, ph_coils, ph_coil_seed);
      c.attributes["history"] = {cmdline};
      c.write(ph_out);
    } else if (*sa) {
      Container c = sample_container(Container::read(sa_in), sa_R, sa_seed, sa_angle);
      c.attributes["history"].push_back(cmdline);
      c.write(sa_out);
      std::printf("R = %.3f\n", c.attributes.at("R").get<double>());
    } else if (*rc) {
      ReconOptions ro;
      ro.method = parse_method(rc_method);
      ro.llr = llr;
      ro.llr.seed = rc_seed;
      ro.seed = rc_seed;
      if (!rc_weights.empty()) { ro.params = load_params(rc_weights); }
      double seconds = 0.0;
      Container c = recon_container(Container::read(rc_in), ro, &seconds);
      c.attributes["history"].push_back(cmdline);
      c.write(rc_out);
      std::printf("%s: %.2f s\n", rc_method.c_str(), seconds);
    } else if (*tr) {
      TrainConfig cfg = tr_profile == "paper" ? TrainConfig::paper() : TrainConfig::desk();
      if (tr_variant == "hamvn") {
        auto const n = cfg.network;
        cfg.network = NetworkConfig::hamvn();
        cfg.network.layers = n.layers;
        cfg.network.n_f = n.n_f;
        cfg.network.n_c = n.n_c;
      }
      if (tr_iters >= 0) { cfg.iters = tr_iters; }
      cfg.seed = tr_seed;
      PhantomConfig pc = tr_profile == "paper" ? PhantomConfig::paper_geometry() : PhantomConfig::desk();
      std::vector<TrainingVolume> data;
      for (Index v = 0; v < tr_volumes; v++) {
        pc.seed = 100 + static_cast<std::uint64_t>(v);
        data.push_back(TrainingVolume::from_phantom(pc, tr_coils, 200 + static_cast<std::uint64_t>(v)));
      }
      auto const res = train(data, cfg, tr_out, tr_verbose);
      auto const &last = res.curve.back();
      std::printf("trained %td iterations: probe loss %.5g -> %.5g, velocity RelErr %.4f -> %.4f\n", cfg.iters,
                  res.curve.front().probe_loss, last.probe_loss, res.curve.front().velocity_relerr, last.velocity_relerr);
    } else if (*ev) {
      auto const rows = eval_container(Container::read(ev_in), ev_against == "truth");
      write_metrics_rows(rows, ev_csv, true);
      for (auto const &r : rows) {
        std::printf("%-10s R=%6.2f nRMSE=%.6f RelErr=%.4f AngErr=%.3f SSIM=%.4f\n", r.method.c_str(), r.R, r.nrmse, r.relerr,
                    r.angerr, r.ssim);
      }
    } else if (*rp) {
      std::vector<std::filesystem::path> paths(rp_csvs.begin(), rp_csvs.end());
      write_report(paths, rp_out);
    } else if (*bm) {
      bo.phantom = bm_profile == "paper" ? PhantomConfig::paper_geometry() : PhantomConfig::desk();
      bo.methods.clear();
      for (auto const &m : bm_methods) { bo.methods.push_back(parse_method(m)); }
      bo.verbose = true;
      auto const rows = run_benchmark(bo);
      std::printf("%-10s %12s\n", "method", "seconds");
      for (auto const &r : rows) { std::printf("%-10s %12.2f\n", r.method.c_str(), r.seconds); }
      if (!bm_csv.empty()) {
        std::FILE *f = std::fopen(bm_csv.c_str(), "w");
        if (!f) { throw Error("cannot write " + bm_csv); }
        std::fprintf(f, "method,seconds\n");
        for (auto const &r : rows) { std::fprintf(f, "%s,%.6f\n", r.method.c_str(), r.seconds); }
        std::fclose(f);
      }
    }
  } catch (std::exception const &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

} // namespace flowrecon
