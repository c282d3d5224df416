#include "line_client.hpp"

#include <coalition_cdn/line_server.hpp>
#include <coalition_cdn/orchestrator.hpp>

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <unistd.h>

using namespace coalition_cdn;
using namespace coalition_cdn::orchestrator;

namespace {

ServerRegistry two_servers()
{
	return ServerRegistry({{ServerId("s1"), 7000}, {ServerId("s2"), 1000}});
}

AssignmentStore crowded_store()
{
	AssignmentStore st;
	for (char const* c : {"c1", "c2", "c3"})
	{
		st.assignments[ClientId(c)] = ServerId("s2");
	}
	return st;
}

std::map<ClientId, Kbps> flat_lambdas(AssignmentStore const& st, Kbps lambda)
{
	std::map<ClientId, Kbps> out;
	for (auto const& [c, s] : st.assignments)
	{
		out[c] = lambda;
	}
	return out;
}

std::filesystem::path scratch_file(std::string const& name)
{
	auto dir = std::filesystem::temp_directory_path() / "coalition_cdn_tests";
	std::filesystem::create_directories(dir);
	auto p = dir / (name + "." + std::to_string(::getpid()));
	std::filesystem::remove(p);
	return p;
}

std::string slurp(std::filesystem::path const& p)
{
	std::ifstream in(p, std::ios::binary);
	std::stringstream ss;
	ss << in.rdbuf();
	return ss.str();
}

} // namespace

TEST_SUITE("registry")
{
	TEST_CASE("parse")
	{
		auto reg = ServerRegistry::parse("# testbed\ns2 5000\n\ns1   7000  # big\r\n");
		REQUIRE(reg.servers().size() == 2);
		CHECK(reg.servers()[0].first == ServerId("s1"));
		CHECK(reg.bandwidth(ServerId("s2")) == 5000);
		CHECK(reg.contains(ServerId("s1")));
		CHECK_FALSE(reg.contains(ServerId("s9")));
		CHECK_THROWS_AS(reg.bandwidth(ServerId("s9")), UnknownServer);
	}

	TEST_CASE("rejects bad input")
	{
		CHECK_THROWS_AS(ServerRegistry::parse("s1\n"), std::invalid_argument);
		CHECK_THROWS_AS(ServerRegistry::parse("s1 7k\n"), std::invalid_argument);
		CHECK_THROWS_AS(ServerRegistry::parse("s1 0\n"), std::invalid_argument);
		CHECK_THROWS_AS(ServerRegistry::parse("s1 10\ns1 20\n"), std::invalid_argument);
	}
}

TEST_SUITE("store")
{
	TEST_CASE("read your write")
	{
		AssignmentStore st;
		auto reg = two_servers();
		CHECK_FALSE(get_assignment(st, ClientId("c1")));
		CHECK(set_assignment(st, reg, ClientId("c1"), ServerId("s2")) == 1);
		CHECK(get_assignment(st, ClientId("c1")) == ServerId("s2"));
		CHECK(get_assignment(st, ClientId("c1")) == get_assignment(st, ClientId("c1")));
	}

	TEST_CASE("single assignment per client")
	{
		AssignmentStore st;
		auto reg = ServerRegistry({{ServerId("s1"), 10}, {ServerId("s3"), 10}});
		set_assignment(st, reg, ClientId("c1"), ServerId("s1"));
		set_assignment(st, reg, ClientId("c1"), ServerId("s3"));
		CHECK(st.assignments.size() == 1);
		CHECK(get_assignment(st, ClientId("c1")) == ServerId("s3"));
	}

	TEST_CASE("unknown server leaves the store unchanged")
	{
		AssignmentStore st = crowded_store();
		AssignmentStore before = st;
		CHECK_THROWS_AS(set_assignment(st, two_servers(), ClientId("c1"), ServerId("s9")), UnknownServer);
		CHECK(st == before);
	}

	TEST_CASE("version counts every set")
	{
		AssignmentStore st;
		auto reg = two_servers();
		for (int i = 0; i < 100; ++i)
		{
			set_assignment(st, reg, ClientId("c" + std::to_string(i % 7)), ServerId(i % 2 ? "s1" : "s2"));
		}
		CHECK(st.version == 100);
	}

	TEST_CASE("collection round trip")
	{
		AssignmentStore st = crowded_store();
		st.assignments[ClientId("c4")] = ServerId("s1");
		auto col = to_collection(st, two_servers(), flat_lambdas(st, 1360));
		CHECK(col.size() == 2);
		CHECK(col.at(ServerId("s2")).size() == 3);

		AssignmentStore back;
		back.version = st.version;
		for (auto const& co : col.coalitions())
		{
			for (auto const& m : co.members())
			{
				back.assignments[m.id] = co.server_id();
			}
		}
		CHECK(back == st);
	}

	TEST_CASE("snapshot text")
	{
		AssignmentStore st = crowded_store();
		st.version = 7;
		std::string text = to_snapshot_text(st);
		CHECK(text == "c1 s2\nc2 s2\nc3 s2\n# version 7\n");
		CHECK(parse_snapshot_text(text) == st);
		CHECK_THROWS_AS(parse_snapshot_text("c1 s1\nc1 s2\n"), std::invalid_argument);
		CHECK_THROWS_AS(parse_snapshot_text("c1\n"), std::invalid_argument);
	}

	TEST_CASE("lambdas text")
	{
		auto l = parse_lambdas("c1 1360\n# x\nc2 3265\n");
		CHECK(l.size() == 2);
		CHECK(l.at(ClientId("c2")) == 3265);
		CHECK_THROWS_AS(parse_lambdas("c1 fast\n"), std::invalid_argument);
	}
}

TEST_SUITE("run_game")
{
	TEST_CASE("crowded small server empties into the large one")
	{
		AssignmentStore st = crowded_store();
		st.version = 3;
		auto log = run_game(st, two_servers(), flat_lambdas(st, 1360), game::GameConfig{});
		REQUIRE(log.events.size() == 3);
		for (auto const& [c, s] : st.assignments)
		{
			CHECK(s == ServerId("s1"));
		}
		CHECK(st.version == 6);
		CHECK(to_collection(st, two_servers(), flat_lambdas(st, 1360)) == log.final);
	}

	TEST_CASE("stable store is left alone")
	{
		AssignmentStore st;
		st.assignments[ClientId("c1")] = ServerId("s1");
		st.version = 5;
		auto log = run_game(st, two_servers(), flat_lambdas(st, 1360), game::GameConfig{});
		CHECK(log.events.empty());
		CHECK(st.version == 5);
	}

	TEST_CASE("mismatched lambdas leave the store untouched")
	{
		AssignmentStore st = crowded_store();
		AssignmentStore before = st;
		auto lambdas = flat_lambdas(st, 1360);
		lambdas.erase(ClientId("c2"));
		CHECK_THROWS_AS(run_game(st, two_servers(), lambdas, game::GameConfig{}), std::invalid_argument);
		lambdas[ClientId("zz")] = 1360;
		CHECK_THROWS_AS(run_game(st, two_servers(), lambdas, game::GameConfig{}), std::invalid_argument);
		CHECK(st == before);
	}

	TEST_CASE("transfer cap failure leaves the store untouched")
	{
		AssignmentStore st = crowded_store();
		AssignmentStore before = st;
		game::GameConfig cfg;
		cfg.max_transfers = 1;
		CHECK_THROWS_AS(run_game(st, two_servers(), flat_lambdas(st, 1360), cfg), game::TransferCapExceeded);
		CHECK(st == before);
	}
}

TEST_SUITE("protocol")
{
	TEST_CASE("grammar")
	{
		Orchestrator o(two_servers());
		CHECK(o.handle_request("SET c1 s2\n") == "OK 1\n");
		CHECK(o.handle_request("GET c1\n") == "s2\n");
		CHECK(o.handle_request("FROB x\n") == "ERR BADREQ\n");
		CHECK(o.handle_request("GET nobody\n") == "ERR NOTFOUND\n");
		CHECK(o.handle_request("SET c2 s9\n") == "ERR NOSERVER\n");
		CHECK(o.handle_request("GET c2\n") == "ERR NOTFOUND\n");
		CHECK(o.handle_request("SET c0 s1\n") == "OK 2\n");
		CHECK(o.handle_request("DUMP\n") == "c0 s1\nc1 s2\nEND\n");
		CHECK(o.handle_request("GET c1") == "s2\n");
	}

	TEST_CASE("malformed lines")
	{
		Orchestrator o(two_servers());
		for (std::string_view bad : {"", "\n", "GET\n", "GET  c1\n", " GET c1\n", "GET c1 \n", "get c1\n",
		                             "SET c1\n", "SET c1 s1 s2\n", "DUMP x\n", "GET c\t1\n", "GET c1\r\n",
		                             "GET c1\n\n"})
		{
			CAPTURE(bad);
			CHECK(o.handle_request(bad) == "ERR BADREQ\n");
		}
		CHECK(o.snapshot().version == 0);
	}

	TEST_CASE("length limit")
	{
		Orchestrator o(two_servers());
		std::string id(256 - 8, 'x'); // "SET " + id + " s1" + "\n" is 256 bytes
		std::string line = "SET " + id + " s1\n";
		REQUIRE(line.size() == 256);
		CHECK(o.handle_request(line) == "OK 1\n");
		std::string longer = "SET " + id + "x s1\n";
		CHECK(o.handle_request(longer) == "ERR BADREQ\n");
		CHECK(o.handle_request(longer.substr(0, longer.size() - 1)) == "ERR BADREQ\n");
	}

	TEST_CASE("utf-8 ids")
	{
		Orchestrator o(two_servers());
		CHECK(o.handle_request("SET caf\xc3\xa9 s1\n") == "OK 1\n");
		CHECK(o.handle_request("GET caf\xc3\xa9\n") == "s1\n");
	}
}

TEST_SUITE("orchestrator")
{
	TEST_CASE("persists snapshots")
	{
		auto path = scratch_file("store");
		{
			Orchestrator o(two_servers(), crowded_store(), path);
			o.set(ClientId("c4"), ServerId("s1"));
			CHECK(slurp(path) == "c1 s2\nc2 s2\nc3 s2\nc4 s1\n# version 1\n");
			auto snap = o.snapshot();
			o.run_game(flat_lambdas(snap, 1360), game::GameConfig{});
		}
		AssignmentStore reloaded = parse_snapshot_text(slurp(path));
		CHECK(reloaded.version == 4);
		Orchestrator again(two_servers(), reloaded);
		CHECK(again.get(ClientId("c3")) == ServerId("s1"));
		std::filesystem::remove(path);
	}

	TEST_CASE("rejects a store naming unregistered servers")
	{
		AssignmentStore st;
		st.assignments[ClientId("c1")] = ServerId("s9");
		CHECK_THROWS_AS(Orchestrator(two_servers(), st), UnknownServer);
	}

	TEST_CASE("socket session over tcp")
	{
		Orchestrator o(two_servers());
		LineServer server(o, "127.0.0.1:0");
		REQUIRE(server.port() != 0);
		testing_support::LineClient client("127.0.0.1:" + std::to_string(server.port()));
		CHECK(client.request("SET c1 s2") == "OK 1\n");
		CHECK(client.request("GET c1") == "s2\n");
		CHECK(client.request("DUMP") == "c1 s2\nEND\n");
		CHECK(client.request("FROB x") == "ERR BADREQ\n");

		// Two requests in one write, then an oversized line.
		client.send_raw("GET c1\nGET c2\n");
		CHECK(client.read_line() == "s2\n");
		CHECK(client.read_line() == "ERR NOTFOUND\n");
		client.send_raw(std::string(1000, 'G') + "\nGET c1\n");
		CHECK(client.read_line() == "ERR BADREQ\n");
		CHECK(client.read_line() == "s2\n");
		server.stop();
	}

	TEST_CASE("socket session over a unix socket")
	{
		auto path = scratch_file("sock");
		Orchestrator o(two_servers());
		LineServer server(o, "unix:" + path.string());
		{
			testing_support::LineClient a("unix:" + path.string());
			testing_support::LineClient b("unix:" + path.string());
			CHECK(a.request("SET c1 s1") == "OK 1\n");
			CHECK(b.request("GET c1") == "s1\n");
		}
		server.stop();
		CHECK_FALSE(std::filesystem::exists(path));
	}

	TEST_CASE("stop with an idle connection open")
	{
		Orchestrator o(two_servers());
		LineServer server(o, "127.0.0.1:0");
		testing_support::LineClient idle("127.0.0.1:" + std::to_string(server.port()));
		CHECK(idle.request("DUMP") == "END\n");
		server.stop();
	}
}
