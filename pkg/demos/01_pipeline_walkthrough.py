"""
Walking one sentence through the agent pipelines
================================================

A scripted backend stands in for the language model, so every number
below is reproducible.  We run the three systems on one input and look
at what each call saw and answered.
"""

from kairanban import PipelineConfig, THREE_CLASS, entropy, run_instance
from kairanban.mockfixtures import converging_script

text = "The first half dragged, but the finale won me over completely."

###############################################################################
# A single call
# -------------
# The baseline asks once and reads a label distribution out of the
# fenced JSON block in the reply.

single = run_instance(text, PipelineConfig("single", THREE_CLASS),
                      converging_script(system="single").backend())
print("single:", single.final_distribution.as_dict(THREE_CLASS))

###############################################################################
# Sequential circulation
# ----------------------
# Six agents take turns.  Each one sees the input, the previous agent's
# analysis and every earlier agent's one-line opinion with its
# distribution.  A final judge call integrates the finished document.

cfg = PipelineConfig("kcs", THREE_CLASS, n_agents=6)
kcs = run_instance(text, cfg, converging_script(system="kcs").backend())
print("\nphases:", kcs.phases)
for step, p in enumerate(kcs.per_step_distributions, start=1):
    print(f"  agent {step}: entropy {entropy(p):.4f}  {p.as_dict(THREE_CLASS)}")

###############################################################################
# Adding the informal chat
# ------------------------
# With ``kcs_ibc`` the circulation pauses before agent 3.  Agents 0..6
# each add one free-form comment; later agents read everything said so
# far and the remaining steps see the whole chat.

cfg = PipelineConfig("kcs_ibc", THREE_CLASS, n_agents=6, ibc_index=3)
chat = run_instance(text, cfg, converging_script().backend())
print("\nphases:", chat.phases)
for c in chat.comments:
    print(f"  comment {c.agent_index}: {c.text}")

###############################################################################
# The prompt agent 3 received after the chat ends with the task
# instructions; the comments sit just above them.

agent3 = [c for c in chat.calls if c.phase == "kcs"][2]
print("\n" + agent3.prompt[1].content)
print("final:", chat.final_distribution.as_dict(THREE_CLASS))
