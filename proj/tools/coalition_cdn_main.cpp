/*
 * Copyright 2026 The coalition-cdn Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <coalition_cdn/engine.hpp>
#include <coalition_cdn/harness.hpp>
#include <coalition_cdn/line_server.hpp>
#include <coalition_cdn/orchestrator.hpp>
#include <coalition_cdn/snapshot.hpp>

#include <CLI11.hpp>

#include <csignal>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

using namespace coalition_cdn;

namespace {

struct RunOptions
{
	std::string scenario;
	std::string out;
	std::size_t jobs{1};
	std::optional<std::uint64_t> seed;
	std::vector<std::size_t> counts;
};

int run(RunOptions const& o, bool all_counts)
{
	harness::ScenarioConfig cfg = harness::load_scenario(o.scenario);
	if (o.seed)
	{
		cfg.base_seed = *o.seed;
	}
	if (!all_counts && !o.counts.empty())
	{
		for (std::size_t n : o.counts)
		{
			if (std::find(cfg.client_counts.begin(), cfg.client_counts.end(), n) == cfg.client_counts.end())
			{
				throw std::invalid_argument("--count " + std::to_string(n) + " is not in the scenario");
			}
		}
		cfg.client_counts = o.counts;
	}
	auto points = harness::run_experiment(cfg, o.out, o.jobs);
	std::cerr << "wrote " << points.size() * 2 << " records to " << o.out << "\n";
	return 0;
}

int stabilize(std::string const& path, game::Kbps xi, std::size_t max_transfers, std::string const& final_out)
{
	game::GameConfig cfg;
	cfg.xi = xi;
	cfg.max_transfers = max_transfers;
	game::TransferLog log = game::stabilize(game::read_snapshot_file(path), cfg);
	std::cout << game::format_events(log.events);
	if (!final_out.empty())
	{
		game::write_snapshot_file(final_out, log.final);
	}
	return 0;
}

std::string read_text(std::string const& path)
{
	std::ifstream in(path, std::ios::binary);
	if (!in)
	{
		throw std::runtime_error("cannot open '" + path + "'");
	}
	std::stringstream ss;
	ss << in.rdbuf();
	return ss.str();
}

struct ServeOptions
{
	std::string registry;
	std::string store;
	std::string listen;
	std::string lambdas;
	game::Kbps xi{100};
	double game_period_s{0};
};

void play(orchestrator::Orchestrator& orch, ServeOptions const& o)
{
	game::GameConfig cfg;
	cfg.xi = o.xi;
	try
	{
		auto log = orch.run_game(orchestrator::parse_lambdas(read_text(o.lambdas)), cfg);
		std::cerr << "game: " << log.events.size() << " transfers\n";
	}
	catch (std::exception const& e)
	{
		std::cerr << "game skipped: " << e.what() << "\n";
	}
}

int serve(ServeOptions const& o)
{
	// Block the stop signals everywhere; the main thread collects them below.
	sigset_t stop_set;
	sigemptyset(&stop_set);
	sigaddset(&stop_set, SIGINT);
	sigaddset(&stop_set, SIGTERM);
	pthread_sigmask(SIG_BLOCK, &stop_set, nullptr);

	auto registry = orchestrator::ServerRegistry::read_file(o.registry);
	orchestrator::AssignmentStore initial;
	if (std::filesystem::exists(o.store))
	{
		initial = orchestrator::parse_snapshot_text(read_text(o.store));
	}
	orchestrator::Orchestrator orch(std::move(registry), std::move(initial), std::filesystem::path(o.store));
	orchestrator::LineServer server(orch, o.listen);
	std::cerr << "listening on " << o.listen;
	if (server.port() != 0)
	{
		std::cerr << " (port " << server.port() << ")";
	}
	std::cerr << "\n";

	if (!o.lambdas.empty())
	{
		play(orch, o);
	}
	while (true)
	{
		int sig = 0;
		if (!o.lambdas.empty() && o.game_period_s > 0)
		{
			timespec ts{};
			ts.tv_sec = static_cast<time_t>(o.game_period_s);
			ts.tv_nsec = static_cast<long>((o.game_period_s - static_cast<double>(ts.tv_sec)) * 1e9);
			sig = sigtimedwait(&stop_set, nullptr, &ts);
			if (sig < 0)
			{
				play(orch, o);
				continue;
			}
		}
		else if (sigwait(&stop_set, &sig) != 0)
		{
			continue;
		}
		break;
	}
	server.stop();
	return 0;
}

} // namespace

int main(int argc, char** argv)
{
	CLI::App app{"Coalitional-game client-to-server assignment for multi-server DASH streaming"};
	app.require_subcommand(1);

	RunOptions run_opts;
	auto add_run_options = [&](CLI::App* sub) {
		sub->add_option("--scenario", run_opts.scenario, "Scenario file, or `paper` for the built-in one")->required();
		sub->add_option("--out", run_opts.out, "Output directory")->required();
		sub->add_option("--jobs", run_opts.jobs, "Points computed in parallel")->check(CLI::PositiveNumber);
		sub->add_option("--seed", run_opts.seed, "Override the scenario base seed");
	};
	CLI::App* run_cmd = app.add_subcommand("run", "Run the two-phase experiment and write the CSV tables");
	add_run_options(run_cmd);
	run_cmd->add_option("--count", run_opts.counts, "Restrict to these client counts (repeatable)");
	CLI::App* sweep_cmd = app.add_subcommand("sweep", "Same as run, always over every client count");
	add_run_options(sweep_cmd);

	std::string collection;
	std::string final_out;
	game::Kbps xi = 100;
	std::size_t max_transfers = 0;
	CLI::App* stab_cmd = app.add_subcommand("stabilize", "Stabilize a collection snapshot and print the transfers");
	stab_cmd->add_option("--collection", collection, "JSON collection snapshot")->required();
	stab_cmd->add_option("--xi", xi, "Minimum payoff gain for a transfer, Kbps");
	stab_cmd->add_option("--max-transfers", max_transfers, "Transfer cap, 0 for the default");
	stab_cmd->add_option("--final", final_out, "Write the stable collection here");

	ServeOptions serve_opts;
	CLI::App* serve_cmd = app.add_subcommand("serve", "Serve the assignment store over the line protocol");
	serve_cmd->add_option("--registry", serve_opts.registry, "`server_id bandwidth_kbps` lines")->required();
	serve_cmd->add_option("--store", serve_opts.store, "Store snapshot, loaded if present and kept up to date")
		->required();
	serve_cmd->add_option("--listen", serve_opts.listen, "host:port or unix:/path")->required();
	serve_cmd->add_option("--lambdas", serve_opts.lambdas, "`client kbps` lines; runs the game at startup");
	serve_cmd->add_option("--xi", serve_opts.xi, "Minimum payoff gain for a transfer, Kbps");
	serve_cmd->add_option("--game-period", serve_opts.game_period_s,
	                      "Rerun the game every this many seconds, rereading --lambdas (0 = once)");

	CLI11_PARSE(app, argc, argv);

	try
	{
		if (*run_cmd)
		{
			return run(run_opts, false);
		}
		if (*sweep_cmd)
		{
			return run(run_opts, true);
		}
		if (*stab_cmd)
		{
			return stabilize(collection, xi, max_transfers, final_out);
		}
		if (*serve_cmd)
		{
			return serve(serve_opts);
		}
	}
	catch (std::exception const& e)
	{
		std::cerr << "coalition-cdn: " << e.what() << "\n";
		return 1;
	}
	return 2;
}
