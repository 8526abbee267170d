import init, { simulate, collisionCone, reachableSet } from "./pkg/simplex_drive_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);

let episode = null;
let timer = null;

function drawRoad(step) {
  const c = $("road");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  if (!episode) return;
  const { lanes, lane_width } = episode.road;
  const [len, wid] = episode.vehicle;
  const row = episode.trace[step];
  const scale = (c.height - 10) / (lanes * lane_width);
  const x0 = row.ego_x - 25;
  const sx = (x) => (x - x0) * scale;
  const sy = (y) => c.height - 5 - y * scale;

  g.strokeStyle = "#999";
  for (let i = 0; i <= lanes; i++) {
    g.setLineDash(i === 0 || i === lanes ? [] : [12, 10]);
    g.beginPath();
    g.moveTo(0, sy(i * lane_width));
    g.lineTo(c.width, sy(i * lane_width));
    g.stroke();
  }
  g.setLineDash([]);

  const car = (x, y, h, fill) => {
    g.save();
    g.translate(sx(x), sy(y));
    g.rotate(-h);
    g.fillStyle = fill;
    g.fillRect((-len / 2) * scale, (-wid / 2) * scale, len * scale, wid * scale);
    g.restore();
  };
  for (const o of row.obstacles) car(o.x, o.y, o.heading, "#777");
  car(row.ego_x, row.ego_y, row.ego_heading, row.mode === "BC" ? "#d1731f" : "#1f6fd1");

  const mode = row.mode === "BC" ? '<span class="bc">BC</span>' : '<span class="ac">AC</span>';
  $("status").innerHTML =
    `t = ${row.time.toFixed(1)} s, mode ${mode}, speed ${row.ego_v.toFixed(2)} m/s, ` +
    `accel ${row.accel.toFixed(2)}, steer ${row.steer.toFixed(3)}, in safe set: ${row.safe}`;
}

function run() {
  stop();
  try {
    const config = $("full").checked ? JSON.stringify({ sim: { hold_steps: 1e6 } }) : "";
    episode = JSON.parse(simulate(config, $("controller").value, Math.max(0, num("seed") | 0), num("density")));
  } catch (e) {
    episode = null;
    $("metrics").textContent = String(e);
    drawRoad(0);
    return;
  }
  $("metrics").textContent = JSON.stringify(episode.result, null, 2);
  const t = $("time");
  t.max = episode.trace.length - 1;
  t.value = 0;
  t.disabled = false;
  $("play").disabled = false;
  drawRoad(0);
}

function stop() {
  if (timer) clearInterval(timer);
  timer = null;
  $("play").textContent = "Play";
}

function play() {
  if (timer) return stop();
  const t = $("time");
  if (+t.value >= +t.max) t.value = 0;
  $("play").textContent = "Pause";
  timer = setInterval(() => {
    if (+t.value >= +t.max) return stop();
    t.value = +t.value + 1;
    drawRoad(+t.value);
  }, 50);
}

// Velocity plot: x from -5 to 30 m/s, y from -12 to 12 m/s.
const view = { x0: -5, x1: 30, y0: -12, y1: 12 };
let probe = { x: 18, y: 0 };

function toPx(c, v) {
  return [
    ((v[0] - view.x0) / (view.x1 - view.x0)) * c.width,
    c.height - ((v[1] - view.y0) / (view.y1 - view.y0)) * c.height,
  ];
}

function fromPx(c, px, py) {
  return {
    x: view.x0 + (px / c.width) * (view.x1 - view.x0),
    y: view.y0 + ((c.height - py) / c.height) * (view.y1 - view.y0),
  };
}

function polygon(g, c, pts, fill, stroke) {
  if (!pts.length) return;
  g.beginPath();
  pts.forEach((p, i) => (i ? g.lineTo(...toPx(c, p)) : g.moveTo(...toPx(c, p))));
  g.closePath();
  g.fillStyle = fill;
  g.fill();
  g.strokeStyle = stroke;
  g.stroke();
}

function drawVelocity() {
  const c = $("vel");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  g.strokeStyle = "#ddd";
  for (let x = Math.ceil(view.x0 / 5) * 5; x <= view.x1; x += 5) {
    const [px] = toPx(c, [x, 0]);
    g.beginPath(); g.moveTo(px, 0); g.lineTo(px, c.height); g.stroke();
  }
  for (let y = Math.ceil(view.y0 / 4) * 4; y <= view.y1; y += 4) {
    const [, py] = toPx(c, [0, y]);
    g.beginPath(); g.moveTo(0, py); g.lineTo(c.width, py); g.stroke();
  }

  let text = "";
  try {
    const reach = JSON.parse(reachableSet(num("speed"), num("heading"), num("dt")));
    polygon(g, c, reach.polygon, "rgba(31,111,209,0.12)", "#1f6fd1");
  } catch (e) {
    text += `reachable set: ${e}\n`;
  }
  try {
    const cone = JSON.parse(
      collisionCone(num("px"), num("py"), num("radius"), num("tau"), num("vb"), probe.x, probe.y),
    );
    polygon(g, c, cone.cone, "rgba(209,60,31,0.15)", "#d13c1f");
    polygon(g, c, cone.vo, "rgba(0,0,0,0.05)", "#888");
    polygon(g, c, cone.obstacle_velocities, "rgba(0,0,0,0.3)", "#333");
    const [ax, ay] = toPx(c, [probe.x, probe.y]);
    const [bx, by] = toPx(c, [probe.x + cone.exit_change[0], probe.y + cone.exit_change[1]]);
    g.strokeStyle = "#000";
    g.beginPath(); g.moveTo(ax, ay); g.lineTo(bx, by); g.stroke();
    g.fillStyle = cone.inside ? "#d13c1f" : "#2a9d3a";
    g.beginPath(); g.arc(ax, ay, 4, 0, 2 * Math.PI); g.fill();
    const dv = cone.exit_change.map((v) => v.toFixed(3));
    text +=
      `ego velocity (${probe.x.toFixed(2)}, ${probe.y.toFixed(2)})\n` +
      `in collision cone: ${cone.inside}\nsmallest exit change: (${dv[0]}, ${dv[1]})`;
  } catch (e) {
    text += String(e);
  }
  $("probe").textContent = text;
}

await init();
$("run").onclick = run;
$("play").onclick = play;
$("time").oninput = (e) => { stop(); drawRoad(+e.target.value); };
$("vel").onclick = (e) => {
  const r = e.target.getBoundingClientRect();
  probe = fromPx(e.target, e.clientX - r.left, e.clientY - r.top);
  drawVelocity();
};
for (const id of ["px", "py", "radius", "tau", "vb", "speed", "heading", "dt"]) $(id).oninput = drawVelocity;
drawVelocity();
run();
