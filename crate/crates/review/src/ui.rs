//! Minimal built-in review page, served at `/` when no UI bundle is
//! configured. It drives the same JSON API as the full UI.

pub const INDEX_HTML: &str = r#"<!doctype html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>Summary review</title>
<style>
body { font-family: sans-serif; max-width: 52rem; margin: 2rem auto; padding: 0 1rem; }
.turn { margin: .2rem 0; }
.arm { border: 1px solid #bbb; border-radius: 4px; padding: .6rem; margin: .6rem 0; }
button { margin: .2rem; }
textarea { width: 100%; }
</style>
</head>
<body>
<h1>Summary review</h1>
<p>
  <label>Session id <input id="sid" size="36"></label>
  <button onclick="load()">Open</button>
</p>
<div id="view"></div>
<script>
const view = document.getElementById("view");
let sid = new URLSearchParams(location.search).get("session") || "";
document.getElementById("sid").value = sid;

function esc(s) {
  const d = document.createElement("div");
  d.textContent = s;
  return d.innerHTML;
}

async function post(itemId, payload) {
  const r = await fetch(`/sessions/${sid}/items/${itemId}/events`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(payload),
  });
  const body = await r.json();
  if (!r.ok) alert(body.message);
  return body;
}

async function load() {
  sid = document.getElementById("sid").value.trim();
  const r = await fetch(`/sessions/${sid}/next`);
  const body = await r.json();
  if (!r.ok) { view.innerHTML = `<p>${esc(body.message)}</p>`; return; }
  if (body.status === "done") { view.innerHTML = "<p>All items reviewed.</p>"; return; }
  const item = body.item;
  let html = `<p>Item ${item.position + 1} of ${item.total}</p>`;
  for (const t of item.snippet.turns) html += `<div class="turn"><b>${esc(t.speaker)}:</b> ${esc(t.text)}</div>`;
  item.arms.forEach((arm, i) => {
    html += `<div class="arm"><p><b>Summary ${i + 1}</b></p><p>${esc(arm.summary)}</p>`;
    if (body.mode === "grade") {
      for (const b of ["all", "most", "some", "none"])
        html += `<button data-arm="${arm.arm_id}" data-bucket="${b}">${b}</button>`;
    } else {
      html += `<button data-best="${arm.arm_id}">best</button>`;
    }
    html += `<details><summary>edit</summary><textarea rows="3" id="e-${arm.arm_id}">${esc(arm.summary)}</textarea>`
      + `<button data-edit="${arm.arm_id}">save edit</button></details></div>`;
  });
  if (body.mode === "compare")
    html += `<button data-winner="all_good">all good</button><button data-winner="none_good">none good</button>`;
  view.innerHTML = html;
  view.querySelectorAll("button").forEach(btn => btn.onclick = async () => {
    const d = btn.dataset;
    if (d.bucket) {
      await post(item.item_id, { kind: "grade", arm_id: d.arm, bucket: d.bucket });
      btn.parentElement.style.opacity = 0.5;
    } else if (d.best) {
      await post(item.item_id, { kind: "choice", winner: { kind: "arm", arm_id: d.best } });
    } else if (d.winner) {
      await post(item.item_id, { kind: "choice", winner: { kind: d.winner } });
    } else if (d.edit) {
      const text = document.getElementById(`e-${d.edit}`).value;
      await post(item.item_id, { kind: "edit", arm_id: d.edit, edited_text: text });
      return;
    }
    const next = await fetch(`/sessions/${sid}/next`).then(r => r.json());
    if (next.status === "done" || next.item.item_id !== item.item_id) load();
  });
}

if (sid) load();
</script>
</body>
</html>
"#;
