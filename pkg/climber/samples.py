"""Sample fixtures used by tests, the CLI and the validation scripts."""

TOY_CONFIG_TOML = """\
[model]
d_model = 16
num_heads = 2
layers_per_block = 2
num_blocks = 2
budget = 8
num_scenarios = 3
vocab_size = 200

[[strategies]]
name = "positive"
action_filter = ["play_full", "like", "share", "comment"]

[[strategies]]
name = "all"

[data]
source = "synthetic:seed=0,users=16,candidates=4,samples=2"

[train]
lr = 0.003
steps = 4
batch_users = 4
seed = 0
eval_every = 2

[experiment]
seeds = [0]
workers = 1
families = [[[16, 1], [8, 2]]]
layers = [1, 2]
sequence = [8, 16]

[bench]
candidates = [1, 4]
reps = 1
seed = 0

[serving]
capacity = 8
max_batch = 64
"""

SAMPLE_EVENTS_TSV = """\
user_id\titem_id\taction\ttimestamp\tscenario_id
u1\t11\tclick\t100\t0
u1\t12\tplay_full\t160\t0
u1\t13\tskip\t400\t1
u1\t14\tlike\t4000\t1
u1\t15\tshare\t90000\t2
u1\t16\tskip\t90050\t2
u1\t17\tcomment\t90100\t0
u2\t21\tskip\t50\t0
u2\t22\tclick\t70\t0
u2\t23\tplay_full\t3700\t1
u2\t24\tskip\t3800\t1
u2\t25\tlike\t700000\t2
u2\t26\tclick\t700100\t2
u3\t31\tlike\t10\t0
u3\t32\tskip\t20\t0
"""

# per user: (item_id, action) in timestamp order
EXPECTED_SAMPLE_ORDER = {
    "u1": [(11, "click"), (12, "play_full"), (13, "skip"), (14, "like"), (15, "share"), (16, "skip"), (17, "comment")],
    "u2": [(21, "skip"), (22, "click"), (23, "play_full"), (24, "skip"), (25, "like"), (26, "click")],
    "u3": [(31, "like"), (32, "skip")],
}
