#!/usr/bin/env python3
"""Regenerates data/leaves.jsonl, the 20-leaf fixture for the label-space lab.

Utterance 0 of every leaf is the published example utterance (source "published").
Everything else is hand-written fixture content (source "fixture"). Edit the
tables below and rerun; the output is deterministic.
"""
import json
import pathlib

# (singular, plural) product nouns used across classes
P = [
    ("laptop", "laptops"), ("phone", "phones"), ("tablet", "tablets"), ("monitor", "monitors"),
    ("pair of headphones", "headphones"), ("camera", "cameras"), ("smartwatch", "smartwatches"),
    ("printer", "printers"), ("keyboard", "keyboards"), ("router", "routers"),
]

# Each class: (name, published recommendation example, published evaluation example,
#              recommendation template, evaluation template, slot values for products 1..9)
CLASSES = [
    ("static_attribute", "show laptop with 8gb RAM", "does this laptop have 8gb RAM",
     "show {pl} with {x}", "does this {sg} have {x}",
     ["128gb storage", "a 120hz display", "usb-c input", "active noise cancellation", "4k video recording",
      "built-in gps", "duplex printing", "mechanical switches", "wifi 6 support"]),
    ("similarity_comparison", "show laptop comparable to the Dell XPS 13", "is this laptop comparable to the Dell XPS 13",
     "show {pl} comparable to the {x}", "is this {sg} comparable to the {x}",
     ["iPhone 15", "iPad Air", "LG UltraFine 27", "Sony WH-1000XM5", "Canon EOS R6", "Apple Watch Series 9",
      "HP LaserJet Pro", "Logitech MX Keys", "Netgear Nighthawk"]),
    ("compatibility", "show laptop bags compatible with Dell XPS 15", "are these laptop bags compatible with Dell XPS 15",
     "show {x}", "are these {x}",
     ["phone cases compatible with Pixel 8", "tablet stylus pens compatible with Galaxy Tab S9",
      "monitor arms compatible with a 34 inch screen", "headphone adapters compatible with iPhone 14",
      "camera lenses compatible with Nikon Z6", "watch straps compatible with Fitbit Versa",
      "printer cartridges compatible with Epson EcoTank", "keyboard covers compatible with MacBook Air",
      "mesh extenders compatible with TP-Link Deco"]),
    ("offers", "show laptop with HDFC bank EMI offers", "does this laptop have HDFC bank EMI offers",
     "show {pl} with {x}", "does this {sg} have {x}",
     ["exchange bonus offers", "no cost EMI on ICICI cards", "cashback on UPI payments", "a festive discount",
      "free accessories bundled", "student discount pricing", "a buy one get one deal", "coupon savings today",
      "SBI credit card instant discount"]),
    ("reviews_ratings", "show laptops whose battery life is highly praised by users",
     "are these laptops whose battery life is highly praised by users",
     "show {pl} whose {x}", "are these {pl} whose {x}",
     ["camera quality gets great reviews", "screens are rated highly by buyers", "colour accuracy is loved by reviewers",
      "comfort is praised in customer reviews", "autofocus gets five star ratings", "fitness tracking is rated well",
      "print quality has glowing reviews", "typing feel is praised by users", "range is highly rated by customers"]),
    ("budget", "show laptops under 50k", "are these laptops under 50k",
     "show {pl} {x}", "are these {pl} {x}",
     ["under 20k", "below 30000 rupees", "within a 15k budget", "priced under 5000", "under one lakh",
      "below 25k", "cheaper than 10000", "under 3000 rupees", "within 4000"]),
    ("purpose_usecase", "show laptops suitable for graphic design work",
     "are these laptops suitable for graphic design work",
     "show {pl} suitable for {x}", "are these {pl} suitable for {x}",
     ["mobile gaming", "taking notes in class", "photo editing", "running in the rain", "wildlife photography",
      "swimming laps", "a small home office", "long coding sessions", "a large three storey house"]),
    ("warranty_return", "show laptops with hassle-free return options",
     "do these laptops have hassle-free return options",
     "show {pl} with {x}", "do these {pl} have {x}",
     ["a two year warranty", "extended warranty plans", "a 30 day replacement policy", "free pickup for returns",
      "accidental damage cover", "onsite warranty service", "easy exchange within 10 days",
      "a manufacturer warranty", "a no questions asked refund"]),
    ("delivery_eta", "show laptops that can be delivered within the next week",
     "can these laptops be delivered within the next week",
     "show {pl} that can be delivered {x}", "can these {pl} be delivered {x}",
     ["by tomorrow", "before the weekend", "within two days", "by friday", "today itself", "before diwali",
      "within 48 hours", "this week to my pincode", "by monday morning"]),
    ("past_sales", "show the most popular laptop models recently",
     "are these the most popular laptop models recently",
     "show the {x}", "are these the {x}",
     ["best selling phones this month", "top selling tablets of the year", "monitors people bought most last week",
      "most purchased headphones this season", "trending cameras in sales", "smartwatches with the highest sales",
      "printers that sold the most recently", "most ordered keyboards lately", "routers customers buy most often"]),
]

REC_PARAPHRASES = ["can you show me {r}", "i want to see {r}", "please list {r}"]
EVAL_PARAPHRASES = ["could you check {u}", "i want to know {u}", "tell me {u}"]


def strip_show(u):
    return u[len("show "):] if u.startswith("show ") else u


def leaves():
    out = []
    for parent, paraphrase in (("product_recommendation", REC_PARAPHRASES), ("product_evaluation", EVAL_PARAPHRASES)):
        rec = parent == "product_recommendation"
        for name, rec_ex, eval_ex, rec_t, eval_t, slots in CLASSES:
            utterances = [{"text": rec_ex if rec else eval_ex, "source": "published"}]
            for (sg, pl), x in zip(P[1:], slots):
                text = (rec_t if rec else eval_t).format(sg=sg, pl=pl, x=x)
                utterances.append({"text": text, "source": "fixture"})
            for u in utterances:
                r = strip_show(u["text"]) if rec else u["text"]
                u["paraphrases"] = [p.format(r=r, u=r) for p in paraphrase]
            out.append({"parent": parent, "name": f"{parent}/{name}", "utterances": utterances})
    return out


def main():
    rows = leaves()
    texts = [u["text"] for leaf in rows for u in leaf["utterances"]]
    texts += [p for leaf in rows for u in leaf["utterances"] for p in u["paraphrases"]]
    assert len(rows) == 20 and all(len(l["utterances"]) == 10 for l in rows)
    assert len(set(texts)) == len(texts), "duplicate fixture text"
    path = pathlib.Path(__file__).resolve().parent.parent / "data" / "leaves.jsonl"
    path.write_text("".join(json.dumps(l) + "\n" for l in rows))
    print(f"wrote {len(rows)} leaves to {path}")


if __name__ == "__main__":
    main()
