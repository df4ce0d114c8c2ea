"""Hyperband brackets, successive halving and the BOHB job generator.

Jobs are identified structurally by ``(bracket, stage, slot)`` and new
configs draw from a random stream keyed on ``(seed, bracket, slot)``. The
scheduler state is therefore a pure function of the ingested results, which
is what lets a run be rebuilt from its journal.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .space import InterceptConfig, sample_uniform

_EPS = 1e-9


@dataclass(frozen=True)
class BudgetLadder:
    b_min: int
    b_max: int
    eta: float
    s_max: int

    def budget(self, s):
        """Budget ``b_max * eta**-s`` rounded, never below ``b_min``."""
        return max(self.b_min, int(round(self.b_max * self.eta ** (-s))))

    @property
    def budgets(self):
        return tuple(sorted({self.budget(s) for s in range(self.s_max + 1)}))


def build_ladder(b_min, b_max, eta=3.0):
    if eta <= 1:
        raise ValueError("eta must be > 1")
    if b_min < 1 or b_max < b_min:
        raise ValueError("need 1 <= b_min <= b_max")
    s_max = int(math.floor(math.log(b_max / b_min) / math.log(eta) + _EPS))
    return BudgetLadder(int(b_min), int(b_max), float(eta), s_max)


@dataclass
class Bracket:
    s: int
    stages: list                      # [(n_configs, budget), ...]
    rungs: list = field(default_factory=list)  # per stage: [(config_id, loss), ...]


def bracket_schedule(ladder, s):
    """Successive-halving stages for bracket ``s``: many cheap runs down to few full ones."""
    if not 0 <= s <= ladder.s_max:
        raise ValueError(f"s must lie in [0, {ladder.s_max}]")
    n = int(math.ceil((ladder.s_max + 1) / (s + 1) * ladder.eta ** s - _EPS))
    stages = []
    for i in range(s + 1):
        stages.append((n, ladder.budget(s - i)))
        n = max(1, int(math.floor(n / ladder.eta + _EPS)))
    return Bracket(s, stages, [[] for _ in stages])


_STATUS_RANK = {"completed": 0, "pruned": 1, "failed": 2}


def sh_promote(rung, eta):
    """Ids of the best ``max(1, floor(n / eta))`` entries.

    ``rung`` entries are ``(config_id, loss)`` or ``(config_id, loss, status)``
    in submission order. Ranking: completed before pruned before failed, then
    by loss, then by submission order. A ``None`` loss counts as failed.
    """
    if not rung:
        raise ValueError("empty rung")
    keep = max(1, int(math.floor(len(rung) / eta + _EPS)))

    def key(item):
        pos, entry = item
        loss = entry[1]
        status = entry[2] if len(entry) > 2 else ("failed" if loss is None else "completed")
        rank = _STATUS_RANK.get(status, 2)
        return (rank, math.inf if loss is None else loss, pos)

    ranked = sorted(enumerate(rung), key=key)
    return [entry[0] for _, entry in ranked[:keep]]


@dataclass(frozen=True)
class EarlyStopRule:
    t_start: float = 150.0
    t_end: float = 750.0
    threshold_start: float = 115.0
    threshold_end: float = 5.0
    check_iteration: int = 3
    enabled: bool = True

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError("t_start must precede t_end")
        if self.threshold_start < self.threshold_end:
            raise ValueError("threshold must not increase over time")


def early_stop_threshold(rule, elapsed):
    """Largest allowed intermediate L1 after ``elapsed`` minutes (linear decay)."""
    if elapsed <= rule.t_start:
        return rule.threshold_start
    if elapsed >= rule.t_end:
        return rule.threshold_end
    frac = (elapsed - rule.t_start) / (rule.t_end - rule.t_start)
    return rule.threshold_start + frac * (rule.threshold_end - rule.threshold_start)


def should_stop(intermediate_l1, rule, elapsed):
    """``"prune"`` when the intermediate L1 exceeds the current threshold, else ``"continue"``."""
    if rule.enabled and intermediate_l1 > early_stop_threshold(rule, elapsed):
        return "prune"
    return "continue"


# ---------------------------------------------------------------------------
# BOHB job generator


@dataclass(frozen=True)
class Job:
    bracket: int
    stage: int
    slot: int
    config: InterceptConfig
    budget: int
    origin: str  # "random", "model", "promoted"

    @property
    def key(self):
        return (self.bracket, self.stage, self.slot)


@dataclass
class Observation:
    config_id: str
    values: np.ndarray
    budget: int
    loss: float
    status: str


class _BracketRun:
    def __init__(self, index, schedule):
        self.index = index
        self.schedule = schedule
        self.stage = 0
        self.members = [[None] * schedule.stages[0][0]]  # config ids per stage slot
        self.issued = [set()]
        self.outcomes = [{}]  # slot -> (loss, status)

    @property
    def done(self):
        return self.stage >= len(self.schedule.stages)

    def next_slot(self):
        if self.done:
            return None
        for slot in range(len(self.members[self.stage])):
            if slot not in self.issued[self.stage]:
                return slot
        return None

    def budget(self, stage):
        return self.schedule.stages[stage][1]


class BohbScheduler:
    """Warm-up random runs at full budget, then Hyperband brackets with model proposals.

    ``proposer`` is ``None`` for pure Hyperband or an object with
    ``ready(n)`` and ``propose(points, losses, rng, key)``.
    """

    def __init__(self, space, ladder, seed=0, proposer=None, rho=1 / 3, n_initial=9,
                 n_iterations=None, max_full_budget_trials=None, max_trials=None):
        self.space = space
        self.ladder = ladder
        self.seed = int(seed)
        self.proposer = proposer
        self.rho = float(rho)
        self.n_initial = int(n_initial)
        self.n_iterations = n_iterations
        self.max_full_budget_trials = max_full_budget_trials
        self.max_trials = max_trials
        self.trials_finished = 0
        self.brackets = []
        self.configs = {}
        self.known_configs = {}
        self.dataset = []
        self.full_budget_completed = 0
        self._version = 0
        if self.n_initial > 0:
            self.brackets.append(_BracketRun(0, Bracket(0, [(self.n_initial, ladder.b_max)], [[]])))

    # -- randomness -------------------------------------------------------
    def config_rngs(self, bracket, slot):
        """Independent (coin, proposal) streams for one new config."""
        return (np.random.default_rng([self.seed, bracket, slot, 0]),
                np.random.default_rng([self.seed, bracket, slot, 1]))

    # -- bracket bookkeeping ---------------------------------------------
    def _bracket_s(self, index):
        return self.ladder.s_max - ((index - 1) % (self.ladder.s_max + 1))

    def _hb_brackets(self):
        return sum(1 for b in self.brackets if b.index > 0)

    def _can_open(self):
        return self.n_iterations is None or self._hb_brackets() < self.n_iterations

    def _open_bracket(self):
        index = len(self.brackets) if self.n_initial > 0 else len(self.brackets) + 1
        br = _BracketRun(index, bracket_schedule(self.ladder, self._bracket_s(index)))
        self.brackets.append(br)
        return br

    def _bracket(self, index):
        for b in self.brackets:
            if b.index == index:
                return b
        while not self.brackets or self.brackets[-1].index < index:
            self._open_bracket()
        return self._bracket(index)

    @property
    def target_reached(self):
        if self.max_trials is not None and self.trials_finished >= self.max_trials:
            return True
        return (self.max_full_budget_trials is not None
                and self.full_budget_completed >= self.max_full_budget_trials)

    @property
    def exhausted(self):
        """True once no further job will ever be issued."""
        if self.target_reached:
            return True
        if any(not b.done for b in self.brackets):
            return False
        return not self._can_open()

    # -- config generation ------------------------------------------------
    def observations(self, budget):
        return [o for o in self.dataset if o.budget == budget and o.status != "failed"]

    def model_budget(self):
        """Largest budget with enough observations for the proposer, or ``None``."""
        if self.proposer is None:
            return None
        for b in sorted({o.budget for o in self.dataset}, reverse=True):
            if self.proposer.ready(len(self.observations(b))):
                return b
        return None

    def _new_config(self, bracket, slot):
        cid = f"{bracket}-{slot}"
        if cid in self.known_configs:
            values, origin = self.known_configs[cid]
            return InterceptConfig(values, id=cid, names=self.space.names), origin
        coin, prng = self.config_rngs(bracket, slot)
        if bracket > 0 and self.proposer is not None and self.rho < 1 and coin.random() >= self.rho:
            b = self.model_budget()
            if b is not None:
                obs = self.observations(b)
                values = self.proposer.propose(np.array([o.values for o in obs]),
                                               np.array([o.loss for o in obs]), prng,
                                               key=(self._version, b))
                values = np.clip(values, self.space.lower, self.space.upper)
                return InterceptConfig(values, id=cid, names=self.space.names), "model"
        return sample_uniform(self.space, prng, id=cid), "random"

    def next_job(self):
        """Next job in the oldest bracket with unissued work, opening brackets as needed."""
        if self.target_reached:
            return None
        for br in self.brackets:
            slot = br.next_slot()
            if slot is not None:
                return self._issue(br, slot)
        if self._can_open():
            br = self._open_bracket()
            return self._issue(br, br.next_slot())
        return None

    def _issue(self, br, slot):
        stage = br.stage
        cid = br.members[stage][slot]
        if cid is None:
            config, origin = self._new_config(br.index, slot)
            self.configs[config.id] = config
            br.members[stage][slot] = config.id
        else:
            config, origin = self.configs[cid], "promoted"
        br.issued[stage].add(slot)
        return Job(br.index, stage, slot, config, br.budget(stage), origin)

    def release(self, job):
        """Return an issued-but-unfinished job to the bracket (used after worker loss)."""
        br = self._bracket(job.bracket)
        if br.stage == job.stage:
            br.issued[job.stage].discard(job.slot)

    # -- result ingestion -------------------------------------------------
    def ingest(self, key, config_id, values, budget, loss, status):
        """Record one finished trial; returns True if it advanced a rung."""
        bracket, stage, slot = key
        br = self._bracket(bracket)
        if stage != br.stage or slot in br.outcomes[stage]:
            raise ValueError(f"unexpected result for job {key}")
        if br.members[stage][slot] is None:
            br.members[stage][slot] = config_id
        elif br.members[stage][slot] != config_id:
            raise ValueError(f"job {key} belongs to config {br.members[stage][slot]}, not {config_id}")
        if config_id not in self.configs:
            self.configs[config_id] = InterceptConfig(values, id=config_id, names=self.space.names)
        br.issued[stage].add(slot)
        br.outcomes[stage][slot] = (loss, status)
        self.trials_finished += 1
        if status != "failed":
            self.dataset.append(Observation(config_id, np.asarray(values, dtype=float), int(budget),
                                            float(loss), status))
            self._version += 1
        if status == "completed" and budget == self.ladder.b_max:
            self.full_budget_completed += 1
        if len(br.outcomes[stage]) == len(br.members[stage]):
            self._advance(br)
            return True
        return False

    def _advance(self, br):
        stage = br.stage
        rung = [(br.members[stage][i], *br.outcomes[stage][i]) for i in range(len(br.members[stage]))]
        br.schedule.rungs[stage] = [(cid, loss) for cid, loss, _ in rung]
        br.stage += 1
        if br.done:
            return
        survivors = sh_promote(rung, self.ladder.eta)
        n_next = br.schedule.stages[br.stage][0]
        survivors = survivors[:n_next]
        br.members.append(list(survivors))
        br.issued.append(set())
        br.outcomes.append({})

    # -- introspection ----------------------------------------------------
    def snapshot(self):
        """Comparable summary of the full scheduler state."""
        return {
            "brackets": [
                {"index": b.index, "s": b.schedule.s, "stage": b.stage,
                 "members": [list(m) for m in b.members],
                 "outcomes": [dict(sorted(o.items())) for o in b.outcomes]}
                for b in self.brackets
            ],
            "dataset": [(o.config_id, o.budget, o.loss, o.status, tuple(np.round(o.values, 12)))
                        for o in self.dataset],
            "full_budget_completed": self.full_budget_completed,
            "trials_finished": self.trials_finished,
        }
