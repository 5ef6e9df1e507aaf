import init, { Strip, eigen_profiles, rho_curve } from "./pkg/zkstrip_web.js";

const $ = (id) => document.getElementById(id);
const X_HALF = 24, NX = 128, NY = 16, WIDTH = 2 * Math.PI;

let strip = null;
let playing = false;

function color(v, scale) {
  const s = Math.max(-1, Math.min(1, v / scale));
  const r = s > 0 ? 255 : Math.round(255 * (1 + s));
  const b = s < 0 ? 255 : Math.round(255 * (1 - s));
  const g = Math.round(255 * (1 - Math.abs(s)));
  return [r, g, b];
}

function drawField() {
  const c = $("field"), ctx = c.getContext("2d");
  const nx = strip.nx(), ny = strip.ny(), u = strip.values();
  let scale = 1e-12;
  for (const v of u) scale = Math.max(scale, Math.abs(v));
  const img = ctx.createImageData(nx, ny);
  for (let i = 0; i < nx; i++) {
    for (let k = 0; k < ny; k++) {
      const [r, g, b] = color(u[i * ny + k], scale);
      const p = 4 * ((ny - 1 - k) * nx + i);
      img.data.set([r, g, b, 255], p);
    }
  }
  const tmp = new OffscreenCanvas(nx, ny);
  tmp.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = true;
  ctx.drawImage(tmp, 0, 0, c.width, c.height);
  $("stats").textContent =
    `t = ${strip.time().toFixed(2)}   max|u| = ${scale.toFixed(3)}   ` +
    `mass / mass(0) - 1 = ${(strip.mass_ratio() - 1).toExponential(2)}   energy = ${strip.energy().toFixed(6)}`;
}

function reset() {
  playing = false;
  $("play").textContent = "play";
  try {
    strip = new Strip($("case").value, X_HALF, NX, NY, +$("amp").value, +$("delta").value);
    drawField();
  } catch (e) {
    $("stats").textContent = String(e);
  }
}

function tick() {
  if (!playing) return;
  try {
    strip.step(2);
    drawField();
    requestAnimationFrame(tick);
  } catch (e) {
    playing = false;
    $("stats").textContent = String(e);
  }
}

function line(ctx, ys, lo, hi, stroke) {
  const w = ctx.canvas.width, h = ctx.canvas.height;
  ctx.strokeStyle = stroke;
  ctx.beginPath();
  ys.forEach((y, k) => {
    const px = (k / (ys.length - 1)) * w;
    const py = h - ((y - lo) / (hi - lo)) * h;
    k ? ctx.lineTo(px, py) : ctx.moveTo(px, py);
  });
  ctx.stroke();
}

function drawProfiles() {
  const n = Math.max(1, Math.min(12, +$("modes").value | 0)), samples = 200;
  const c = $("profiles"), ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  const v = eigen_profiles($("case").value, WIDTH, n, samples);
  const lambdas = Array.from(v.slice(0, n));
  $("lambdas").textContent = "λ = " + lambdas.map((l) => l.toFixed(3)).join(", ");
  for (let l = 0; l < n; l++) {
    const row = Array.from(v.slice(n + l * samples, n + (l + 1) * samples));
    line(ctx, row, -0.65, 0.65, `hsl(${(l * 47) % 360} 70% 45%)`);
  }
}

function drawRho() {
  const a = +$("alpha").value, b = +$("beta").value, samples = 400;
  const c = $("rho"), ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  const v = rho_curve(a, b, -8, 8, samples);
  const rho = [], d = [];
  for (let k = 0; k < samples; k++) { rho.push(v[2 * k]); d.push(v[2 * k + 1]); }
  const hi = Math.max(...rho, ...d) * 1.05;
  line(ctx, rho, 0, hi, "#1f5fa8");
  line(ctx, d, 0, hi, "#c0502a");
  $("ab").textContent = `α = ${a}, β = ${b}  (blue ρ, red ρ')`;
}

await init();
$("reset").onclick = reset;
$("play").onclick = () => {
  playing = !playing;
  $("play").textContent = playing ? "pause" : "play";
  tick();
};
$("case").onchange = () => { reset(); drawProfiles(); };
$("modes").oninput = drawProfiles;
$("alpha").oninput = drawRho;
$("beta").oninput = drawRho;
reset();
drawProfiles();
drawRho();
