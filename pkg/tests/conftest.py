from __future__ import annotations

import pytest

from tamc.syntax import load_model

SPEAKER = """
broadcast chan observable a1;

automaton Speaker {
  clock t;
  init L0;
  loc L0 { inv t<=10; };
  edge L0 -> L0 { guard t>=5; sync a1!; reset t; };
}
"""

# a2 is a broadcast so the translator never blocks
SPEAKER_TRANSLATOR = """
chan a1;
broadcast chan a2;

automaton Speaker {
  clock t;
  init L0;
  loc L0 { inv t<=10; };
  edge L0 -> L0 { guard t>=5; sync a1!; reset t; };
}

automaton Translator {
  clock z;
  init Idle;
  loc Idle;
  loc Sent { inv z<=0; };
  edge Idle -> Sent { sync a1?; reset z; };
  edge Sent -> Idle { sync a2!; };
}
"""


def speaker(lo: int = 5, hi: int = 10):
    return load_model(SPEAKER.replace("t>=5", f"t>={lo}").replace("t<=10", f"t<={hi}"))


def speaker_translator(observable=()):
    text = SPEAKER_TRANSLATOR
    for ch in observable:
        text = text.replace(f"chan {ch};", f"chan observable {ch};")
    return load_model(text)


@pytest.fixture
def spk():
    return speaker()


@pytest.fixture
def st():
    return speaker_translator()
