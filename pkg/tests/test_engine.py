import math

import numpy as np
import pytest

from replaynav.core import AgentState, EnvironmentMap, Episode, Goal, Pose2D
from replaynav.engine import (
    AsyncEpisodeRunner,
    ClientDisconnected,
    CollisionEvent,
    CommandMailbox,
    EpisodeLog,
    EpisodeTerminated,
    Simulator,
    Termination,
    TerminationKind,
    coalesce_collision_events,
    detect_collisions,
    run_episode_asynchronous,
    run_episode_synchronous,
)
from replaynav.ingest import resample_track
from replaynav.robot import HolonomicCommand, RobotSpec, UnicycleCommand
from tests.conftest import open_environment, walled_environment

SPEC = RobotSpec()


def robot_at(x, y, heading=0.0, velocity=(0.0, 0.0)):
    return AgentState(id="robot", pose=Pose2D(x, y, heading),
                      velocity=velocity, radius=0.23)


def ped_at(pid, x, y, velocity=(0.0, 0.0), radius=0.3):
    return AgentState(id=pid, pose=Pose2D(x, y), velocity=velocity,
                      radius=radius)


class StraightDriver:
    """Scripted client: drive at a fixed velocity every tick."""

    def __init__(self, command):
        self.command = command
        self.episodes_seen = 0

    def begin_episode(self, episode, spec):
        self.episodes_seen += 1

    def decide(self, state):
        return self.command

    def end_episode(self, log):
        self.last_log = log


class TestDetectCollisions:
    def test_pedestrian_contact_radii_sum(self, open_env):
        # 0.4 < 0.23 + 0.30 = 0.53 -> contact
        contacts = detect_collisions(
            robot_at(3.0, 3.0), [ped_at(7, 3.4, 3.0)], open_env)
        assert ("pedestrian", 7) in contacts

    def test_far_pedestrian_no_contact(self, open_env):
        contacts = detect_collisions(
            robot_at(1.0, 1.0), [ped_at(7, 11.0, 1.0)], open_env)
        assert contacts == []

    def test_boundary_distance_no_contact(self, open_env):
        # Exactly at the radii sum (binary-exact values): strict
        # inequality, no contact.
        robot = AgentState(id="robot", pose=Pose2D(3.0, 3.0), radius=0.25)
        contacts = detect_collisions(
            robot, [ped_at(7, 3.5, 3.0, radius=0.25)], open_env)
        assert contacts == []

    def test_environment_contact_near_wall(self):
        env = walled_environment()  # 0.1 m wall cells along the border
        # Wall cell edge at x=0.1; robot center 0.1 m away with r=0.23.
        contacts = detect_collisions(robot_at(0.2, 6.0), [], env)
        assert ("environment", None) in contacts

    def test_point_to_cell_distance_oracle(self):
        env = walled_environment()
        # Oracle: brute distance from center to every obstacle cell square.
        def oracle(x, y, r):
            res = env.resolution
            for iy, ix in np.argwhere(~env.traversable):
                cx = min(max(x, ix * res), (ix + 1) * res)
                cy = min(max(y, iy * res), (iy + 1) * res)
                if math.hypot(x - cx, y - cy) < r:
                    return True
            return False

        for x, y in [(0.2, 6.0), (0.34, 6.0), (0.5, 6.0), (6.0, 11.7),
                     (6.0, 6.0), (0.33, 0.33)]:
            got = ("environment", None) in detect_collisions(
                robot_at(x, y), [], env)
            assert got == oracle(x, y, 0.23), (x, y)

    def test_out_of_map_counts_as_obstacle(self, open_env):
        contacts = detect_collisions(robot_at(0.1, 6.0), [], open_env)
        assert ("environment", None) in contacts


class TestCoalesceEvents:
    def test_single_interval(self):
        history = [(t, [("pedestrian", 3)]) for t in range(10, 15)]
        events = coalesce_collision_events(history)
        assert events == [CollisionEvent("pedestrian", 3, 10, 14)]

    def test_split_intervals_same_ped(self):
        history = ([(t, [("pedestrian", 3)]) for t in (10, 11, 12)]
                   + [(t, []) for t in range(13, 20)]
                   + [(t, [("pedestrian", 3)]) for t in (20, 21)])
        events = coalesce_collision_events(history)
        assert len(events) == 2
        assert [(e.start_tick, e.end_tick) for e in events] == [(10, 12), (20, 21)]

    def test_simultaneous_peds_are_separate_events(self):
        # Oracle: group contacts per id, count runs.
        history = [(5, [("pedestrian", 3), ("pedestrian", 5)])]
        events = coalesce_collision_events(history)
        assert len(events) == 2
        assert {e.other_id for e in events} == {3, 5}

    def test_environment_events_tracked(self):
        history = [(4, [("environment", None)])]
        events = coalesce_collision_events(history)
        assert events == [CollisionEvent("environment", None, 4, 4)]


class TestAdvanceTick:
    def test_completion_at_goal(self, straight_episode):
        sim = Simulator(straight_episode, SPEC)
        # Teleport-close start: drive the 6 m at 1.2 m/s.
        for _ in range(200):
            state = sim.advance_tick(UnicycleCommand(1.2, 0.0))
            if state.termination:
                break
        assert state.termination.kind is TerminationKind.COMPLETION
        assert state.termination.success

    def test_timeout_on_next_tick_after_budget(self, open_env):
        ep = Episode(name="idle", environment=open_env, start=Pose2D(6, 6),
                     goal=Goal(11, 11), time_budget=60.0, tick_rate=25.0)
        sim = Simulator(ep, SPEC)
        for _ in range(1500):
            state = sim.advance_tick(UnicycleCommand(0.0, 0.0))
            assert state.termination is None
        state = sim.advance_tick(UnicycleCommand(0.0, 0.0))
        assert state.tick == 1501
        assert state.termination.kind is TerminationKind.TIMEOUT

    def test_env_collision_terminates(self):
        env = walled_environment()
        ep = Episode(name="wall", environment=env, start=Pose2D(1.0, 6.0, math.pi),
                     goal=Goal(11.0, 6.0), time_budget=60.0)
        sim = Simulator(ep, RobotSpec(control_mode="holonomic"))
        state = None
        for _ in range(100):
            state = sim.advance_tick(HolonomicCommand(-1.2, 0.0))
            if state.termination:
                break
        assert state.termination.kind is TerminationKind.ENV_COLLISION
        assert not state.termination.success
        with pytest.raises(EpisodeTerminated):
            sim.advance_tick(HolonomicCommand(0, 0))

    def test_pedestrian_collision_does_not_terminate(self, open_env):
        # Pedestrian parked on the straight line to goal.
        track = resample_track([(0.0, 4.0, 6.0), (60.0, 4.0, 6.0)], 25.0)
        track.id = 9
        ep = Episode(name="through", environment=open_env,
                     start=Pose2D(2, 6, 0), goal=Goal(8, 6, 0.3),
                     tracks=[track], time_budget=60.0)
        driver = StraightDriver(HolonomicCommand(1.2, 0.0))
        log = run_episode_synchronous(ep, driver,
                                      RobotSpec(control_mode="holonomic"))
        assert log.termination.kind is TerminationKind.COMPLETION
        assert not log.termination.success
        assert log.termination.pedestrian_collisions == 1
        assert log.pedestrian_collision_count() == 1

    def test_pedestrians_follow_windows(self, open_env):
        track = resample_track([(1.0, 3.0, 3.0), (2.0, 4.0, 3.0)], 25.0)
        track.id = 4
        ep = Episode(name="window", environment=open_env,
                     start=Pose2D(6, 9, 0), goal=Goal(11, 11, 0.3),
                     tracks=[track], time_budget=10.0)
        sim = Simulator(ep, SPEC)
        assert sim.state.pedestrians == ()
        for _ in range(24):
            sim.advance_tick(UnicycleCommand(0, 0))
        assert sim.state.pedestrians == ()  # t = 0.96 < entry
        sim.advance_tick(UnicycleCommand(0, 0))  # t = 1.0
        assert len(sim.state.pedestrians) == 1
        ped = sim.state.pedestrians[0]
        assert ped.id == 4
        assert ped.velocity == pytest.approx((1.0, 0.0))
        while sim.state.t < 2.0:
            sim.advance_tick(UnicycleCommand(0, 0))
        assert len(sim.state.pedestrians) == 1  # t = 2.0 still inside window
        sim.advance_tick(UnicycleCommand(0, 0))
        assert sim.state.pedestrians == ()  # past exit


class TestSynchronousRun:
    def test_straight_completion_time(self, straight_episode):
        driver = StraightDriver(UnicycleCommand(1.2, 0.0))
        log = run_episode_synchronous(straight_episode, driver, SPEC)
        assert log.termination.kind is TerminationKind.COMPLETION
        # 6 m at 1.2 m/s minus the 0.3 m goal radius: ~4.75 s -> tick ~119,
        # comfortably near the 125-tick full-distance estimate.
        assert log.records[-1].tick == pytest.approx(125, abs=10)

    def test_deterministic_logs(self, straight_episode):
        logs = [
            run_episode_synchronous(
                straight_episode, StraightDriver(UnicycleCommand(1.0, 0.1)),
                SPEC, capture_timing=False)
            for _ in range(2)
        ]
        assert logs[0].to_jsonl() == logs[1].to_jsonl()

    def test_disconnect_classified_timeout(self, straight_episode):
        class DroppingClient(StraightDriver):
            def decide(self, state):
                if state.tick >= 10:
                    raise ClientDisconnected("gone")
                return UnicycleCommand(1.0, 0.0)

        log = run_episode_synchronous(straight_episode,
                                      DroppingClient(None), SPEC)
        assert log.termination.kind is TerminationKind.TIMEOUT
        assert log.transport_failure
        assert not log.termination.success

    def test_pure_replay_pedestrians_identical_across_policies(self, open_env):
        track = resample_track([(0.0, 1.0, 1.0), (10.0, 11.0, 11.0)], 25.0)
        track.id = 2
        ep = Episode(name="replay", environment=open_env,
                     start=Pose2D(6, 6, 0), goal=Goal(11, 6, 0.3),
                     tracks=[track], time_budget=5.0)
        log_a = run_episode_synchronous(
            ep, StraightDriver(UnicycleCommand(0.0, 0.0)), SPEC)
        log_b = run_episode_synchronous(
            ep, StraightDriver(UnicycleCommand(1.2, 0.5)), SPEC)
        assert len(log_a.records) == len(log_b.records)
        for ra, rb in zip(log_a.records, log_b.records):
            assert [(p.id, p.pose) for p in ra.pedestrians] == \
                   [(p.id, p.pose) for p in rb.pedestrians]

    def test_log_round_trip(self, straight_episode):
        driver = StraightDriver(UnicycleCommand(1.2, 0.0))
        log = run_episode_synchronous(straight_episode, driver, SPEC,
                                      capture_timing=False)
        restored = EpisodeLog.from_jsonl(log.to_jsonl())
        assert restored.to_jsonl() == log.to_jsonl()
        assert restored.termination == log.termination


class TestMailbox:
    def test_latest_wins_and_sticky(self):
        box = CommandMailbox()
        assert box.latest() is None
        box.put(UnicycleCommand(0.5, 0.0))
        box.put(UnicycleCommand(0.9, 0.0))
        assert box.latest() == UnicycleCommand(0.9, 0.0)
        assert box.latest() == UnicycleCommand(0.9, 0.0)


class TestAsynchronousRun:
    def test_slow_client_command_persists(self, straight_episode):
        """A command sent every 5 ticks is applied on all 5 ticks."""
        runner = AsyncEpisodeRunner(straight_episode, SPEC, wall_rate=25.0,
                                    pacer=lambda tick: None)
        schedule = {1: UnicycleCommand(1.0, 0.0)}
        applied = []
        original = runner.sim.advance_tick

        def pacer(tick):
            if tick in schedule or (tick - 1) % 5 == 0:
                runner.mailbox.put(UnicycleCommand(1.0, 0.0))

        runner._pacer = pacer
        for _ in range(10):
            pacer(runner.sim.state.tick + 1)
            cmd = runner.mailbox.latest()
            state_before = runner.sim.state
            runner.sim.advance_tick(cmd if cmd else UnicycleCommand(0, 0))
            applied.append(runner.sim.state.robot.pose.x - state_before.robot.pose.x)
        # Every tick moved: the mailbox is sticky between refreshes.
        assert all(dx == pytest.approx(1.0 / 25.0) for dx in applied)

    def test_no_command_before_first_tick_applies_zero(self, straight_episode):
        runner = AsyncEpisodeRunner(straight_episode, SPEC, wall_rate=1000.0,
                                    pacer=lambda tick: None)
        start_x = runner.sim.state.robot.pose.x
        runner._pacer = lambda tick: None
        cmd = runner.mailbox.latest()
        assert cmd is None
        runner.sim.advance_tick(UnicycleCommand(0, 0))
        assert runner.sim.state.robot.pose.x == start_x

    def test_every_tick_replies_match_synchronous(self, straight_episode):
        """Limit case: a client that refreshes the mailbox before every
        tick reproduces the synchronous run exactly."""
        class EveryTickClient:
            def begin_episode(self, episode, spec, runner):
                self.runner = runner
                runner._pacer = self._pace

            def _pace(self, tick):
                self.runner.mailbox.put(UnicycleCommand(1.2, 0.0))

            def end_episode(self, log):
                self.log = log

        client = EveryTickClient()
        async_log = run_episode_asynchronous(
            straight_episode, client, SPEC, wall_rate=25.0)
        sync_log = run_episode_synchronous(
            straight_episode, StraightDriver(UnicycleCommand(1.2, 0.0)), SPEC,
            capture_timing=False)
        assert async_log.to_jsonl() == sync_log.to_jsonl()

    def test_abort_classified_transport_failure(self, straight_episode):
        runner = AsyncEpisodeRunner(straight_episode, SPEC, wall_rate=25.0,
                                    pacer=lambda tick: None)
        runner.abort()
        log = runner.run()
        assert log.transport_failure
        assert log.termination.kind is TerminationKind.TIMEOUT


class TestTermination:
    def test_success_consistency_enforced(self):
        with pytest.raises(ValueError):
            Termination(kind=TerminationKind.COMPLETION, success=True,
                        pedestrian_collisions=2)
        with pytest.raises(ValueError):
            Termination(kind=TerminationKind.TIMEOUT, success=True,
                        pedestrian_collisions=0)
