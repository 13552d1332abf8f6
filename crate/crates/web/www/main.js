import init, {
  architecture_summary,
  class_names,
  preview_side,
  synth_preview,
  Trainer,
} from "./pkg/signcraft_web.js";

const $ = (id) => document.getElementById(id);
let trainer = null;
let trainedDomain = null;

function drawSample(domain, classIndex, seed) {
  const side = preview_side();
  const canvas = document.createElement("canvas");
  canvas.width = side;
  canvas.height = side;
  const pixels = new Uint8ClampedArray(synth_preview(domain, classIndex, BigInt(seed)));
  canvas.getContext("2d").putImageData(new ImageData(pixels, side, side), 0, 0);
  return canvas;
}

function renderGallery() {
  const domain = $("domain").value;
  const seed = Number($("seed").value);
  const gallery = $("gallery");
  gallery.replaceChildren();
  class_names(domain).forEach((name, i) => {
    const figure = document.createElement("figure");
    figure.style.display = "inline-block";
    for (let k = 0; k < 3; k++) figure.append(drawSample(domain, i, seed * 1000 + i * 10 + k));
    const caption = document.createElement("figcaption");
    caption.textContent = name;
    figure.append(caption);
    gallery.append(figure);
  });
}

const nextFrame = () => new Promise((resolve) => setTimeout(resolve, 0));

async function train() {
  const domain = $("domain").value;
  const epochs = Number($("epochs").value);
  const log = $("log");
  $("train").disabled = true;
  try {
    trainer = new Trainer(domain, Number($("per-class").value), BigInt(Number($("seed").value)));
    trainedDomain = domain;
    log.textContent = `train ${trainer.train_size()} / val ${trainer.val_size()} images\n`;
    for (let e = 0; e < epochs; e++) {
      await nextFrame();
      const [loss, acc, valLoss, valAcc] = trainer.run_epoch();
      log.textContent += `epoch ${trainer.epoch()}  loss ${loss.toFixed(4)}  acc ${acc.toFixed(3)}` +
        `  val_loss ${valLoss.toFixed(4)}  val_acc ${valAcc.toFixed(3)}\n`;
    }
    const select = $("predict-class");
    select.replaceChildren(...class_names(domain).map((name, i) => new Option(name, i)));
    $("predict-box").hidden = false;
  } catch (err) {
    log.textContent += `error: ${err.message ?? err}\n`;
  } finally {
    $("train").disabled = false;
  }
}

function predict() {
  const classIndex = Number($("predict-class").value);
  const seed = Math.floor(Math.random() * 2 ** 31);
  const probs = trainer.predict(classIndex, BigInt(seed));
  const names = class_names(trainedDomain);
  const rows = Array.from(probs, (p, i) => [names[i], p]).sort((a, b) => b[1] - a[1]);
  const out = $("prediction");
  out.replaceChildren(drawSample(trainedDomain, classIndex, seed));
  const table = document.createElement("table");
  for (const [name, p] of rows) {
    const tr = table.insertRow();
    tr.insertCell().textContent = name;
    tr.insertCell().textContent = p.toFixed(3);
    const bar = document.createElement("span");
    bar.className = "bar";
    bar.style.width = `${Math.round(p * 200)}px`;
    tr.insertCell().append(bar);
  }
  out.append(table);
}

await init();
$("status").textContent = "ready";
$("render").onclick = renderGallery;
$("summarize").onclick = () => {
  try {
    $("summary").textContent = architecture_summary(Number($("classes").value));
  } catch (err) {
    $("summary").textContent = `error: ${err.message ?? err}`;
  }
};
$("train").onclick = train;
$("predict").onclick = predict;
renderGallery();
