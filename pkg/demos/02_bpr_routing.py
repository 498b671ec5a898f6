"""Travel time and delay on a corridor as volume grows past capacity."""
from tdmrec.network import RoadLink, RoadNetwork, bpr_time, delay, two_way

link = RoadLink("corridor", "A", "B", lanes=2, capacity=1800.0, free_flow_time=10.0)
print(" V/C   time(min)  delay(min)")
for voc in (0.0, 0.5, 0.8, 1.0, 1.2, 1.5, 2.0):
    v = voc * link.capacity
    print(f"{voc:4.1f}  {bpr_time(link, v):9.3f}  {delay(link, v):9.3f}")

nodes = {n: "" for n in "ABCD"}
links = (two_way("AB", "A", "B", 1, 900, 4) + two_way("BD", "B", "D", 1, 900, 4)
         + two_way("AC", "A", "C", 1, 900, 3) + two_way("CD", "C", "D", 1, 900, 5))
net = RoadNetwork(nodes, links)
print("A->D uses", net.route("A", "D"))
