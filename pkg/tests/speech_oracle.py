"""Independent restatement of the speech-act rule table, used as a test oracle.

Written without regular expressions: sentences and words are found by
scanning characters, and cues are matched on word lists.
"""

ACTS = ["question", "statement", "affirmation", "disagreement", "none"]
QUESTION_WORDS = ["what", "why", "how", "where", "when", "who", "which", "do", "does", "can", "could", "should"]
DISAGREE = [["no"], ["not"], ["disagree"], ["but", "i", "think"]]
AFFIRM = [["yes"], ["yeah"], ["right"], ["agree"], ["exactly"], ["ok"]]
TERMINALS = ".?!"


def sentences(text):
    out, cur, i = [], "", 0
    while i < len(text):
        ch = text[i]
        if ch in TERMINALS:
            while i < len(text) and text[i] in TERMINALS:
                cur += text[i]
                i += 1
            out.append(cur)
            cur = ""
            continue
        cur += ch
        i += 1
    out.append(cur)
    return [s.strip() for s in out if any(c not in TERMINALS and not c.isspace() for c in s)]


def words(sentence):
    out, cur = [], ""
    for ch in sentence.lower():
        if ("a" <= ch <= "z") or ("0" <= ch <= "9") or ch == "'":
            cur += ch
        else:
            if cur:
                out.append(cur)
            cur = ""
    if cur:
        out.append(cur)
    return out


def has_phrase(ws, phrase):
    for k in range(len(ws)):
        if ws[k : k + len(phrase)] == phrase:
            return True
    return False


def classify(sentence):
    ws = words(sentence)
    if sentence.endswith("?") or (ws and ws[0] in QUESTION_WORDS):
        return "question"
    for cue in DISAGREE:
        if has_phrase(ws, cue):
            return "disagreement"
    for cue in AFFIRM:
        if has_phrase(ws, cue):
            return "affirmation"
    return "statement"


def dominant_act(text):
    votes = {}
    for s in sentences(text):
        act = classify(s)
        votes[act] = votes.get(act, 0) + 1
    if not votes:
        return "none"
    best = max(votes.values())
    for act in ["question", "disagreement", "affirmation", "statement"]:
        if votes.get(act) == best:
            return act
